//! Result emission: CSV rows, and a small SVG line chart of cost versus ε⁻¹
//! on log-log axes, one polyline per allocator.

use crate::runner::RunSummary;
use std::io::Write;
use std::path::Path;

pub const CSV_HEADER: [&str; 9] = [
    "allocator",
    "epsilon",
    "delta",
    "seed",
    "steps",
    "ratio_mean",
    "mass_ratio",
    "max_waste",
    "rebuild_count",
];

pub fn write_csv(path: &Path, rows: &[RunSummary]) -> Result<(), std::io::Error> {
    let mut w = csv::Writer::from_path(path).map_err(std::io::Error::other)?;
    w.write_record(CSV_HEADER).map_err(std::io::Error::other)?;
    for r in rows {
        let eps = 0.25f64.powi(r.epsilon_log4 as i32);
        let delta = r.delta_ticks as f64 / 2f64.powi(r.resolution_log2 as i32);
        w.write_record([
            r.allocator.clone(),
            format!("{eps:.10}"),
            format!("{delta:.10}"),
            r.seed.to_string(),
            r.steps.to_string(),
            format!("{:.6}", r.metrics.ratio_mean),
            format!("{:.6}", r.metrics.mass_ratio),
            r.max_waste_ticks.to_string(),
            r.rebuilds.to_string(),
        ]).map_err(std::io::Error::other)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<Vec<String>>, std::io::Error> {
    let mut r = csv::Reader::from_path(path).map_err(std::io::Error::other)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(std::io::Error::other)?.iter().map(str::to_string).collect());
    }
    Ok(rows)
}

/// Series of (ε⁻¹, mass_ratio) per allocator.
pub fn write_svg(
    path: &Path,
    series: &[(String, Vec<(f64, f64)>)],
) -> Result<(), std::io::Error> {
    const W: f64 = 640.0;
    const H: f64 = 440.0;
    const PAD: f64 = 56.0;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (_, pts) in series {
        for &(x, y) in pts {
            if x > 0.0 && y > 0.0 {
                xs.push(x.log2());
                ys.push(y.log2());
            }
        }
    }
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let px = |x: f64| PAD + (x.log2() - x0) / (x1 - x0).max(1e-9) * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - (y.log2() - y0) / (y1 - y0).max(1e-9) * (H - 2.0 * PAD);
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"];

    let mut out = std::fs::File::create(path)?;
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    )?;
    writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#)?;
    writeln!(
        out,
        r#"<line x1="{PAD}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        H - PAD,
        W - PAD,
        H - PAD
    )?;
    writeln!(out, r#"<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="black"/>"#, H - PAD)?;
    writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">1/eps (log2)</text>"#,
        W / 2.0,
        H - 16.0
    )?;
    writeln!(
        out,
        r#"<text x="16" y="{}" font-size="12" transform="rotate(-90 16 {})">mass ratio (log2)</text>"#,
        H / 2.0,
        H / 2.0
    )?;
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = palette[i % palette.len()];
        let line: Vec<String> = pts
            .iter()
            .filter(|&&(x, y)| x > 0.0 && y > 0.0)
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            line.join(" ")
        )?;
        writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{name}</text>"#,
            W - PAD + 4.0,
            PAD + 16.0 * i as f64
        )?;
    }
    writeln!(out, "</svg>")?;
    Ok(())
}

fn bounds(vals: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in vals {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    }
}
