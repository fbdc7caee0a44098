//! Runner-level integration: byte-identical reruns, CSV round-trips, trace
//! emission and replay equivalence.

use realloc_cli::config::{ExperimentConfig, ValidateMode};
use realloc_cli::outputs::{read_csv, write_csv, write_svg, CSV_HEADER};
use realloc_cli::runner::{build_allocator, default_workload, run_named_cell, trace_header, AllocParams};
use realloc_core::alloc::layout_of;
use realloc_core::tick::TickConfig;
use realloc_core::trace::{read_trace, replay, TraceRecord, TraceWriter};
use realloc_core::workload::generate;

/// Run an allocator's default workload while recording a trace into memory;
/// returns the trace bytes and the final layout digest.
fn run_with_trace(name: &str, k: u32, steps: u64, seed: u64) -> (Vec<u8>, u64) {
    let needs = if name == "combined" { 10 * (k + 1) } else { 10 * k };
    let cfg = TickConfig::pow4(40.max(needs), k).unwrap();
    let spec = default_workload(name, &cfg, &AllocParams::default(), steps, seed).unwrap();
    let events = generate(&spec, &cfg).unwrap();
    let mut alloc = build_allocator(name, cfg, seed, &AllocParams::default()).unwrap();
    let mut writer = TraceWriter::new(Vec::new(), &trace_header(name, &cfg, seed)).unwrap();
    for (step, ev) in events.iter().enumerate() {
        let out = alloc.apply(ev, true).unwrap();
        writer
            .record(&TraceRecord {
                step: step as u64,
                event: *ev,
                moves: out.moves,
                moved_mass_ticks: out.moved_mass,
                allocator: alloc.name().to_string(),
            })
            .unwrap();
    }
    let digest = layout_of(alloc.as_ref()).digest();
    (writer.into_inner(), digest)
}

#[test]
fn identical_config_and_seed_are_byte_identical() {
    let (a, da) = run_with_trace("simple", 3, 600, 5);
    let (b, db) = run_with_trace("simple", 3, 600, 5);
    assert_eq!(da, db);
    assert_eq!(a, b, "same config + seed must produce byte-identical traces");
    let (c, _) = run_with_trace("simple", 3, 600, 6);
    assert_ne!(a, c);
}

#[test]
fn emitted_traces_replay_to_the_final_layout() {
    for (name, k) in [("folklore", 3), ("simple", 3), ("geo", 2), ("rsum", 4), ("block", 2), ("combined", 2)] {
        let (bytes, digest) = run_with_trace(name, k, 400, 9);
        let (header, records) = read_trace(std::io::Cursor::new(bytes)).unwrap();
        let result = replay(&header, &records).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(result.final_digest, digest, "{name}: replayed layout digest differs");
    }
}

#[test]
fn csv_row_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("results.csv");
    let cfg = TickConfig::pow4(40, 3).unwrap();
    let out = run_named_cell(
        "simple",
        cfg,
        &AllocParams::default(),
        None,
        500,
        7,
        ValidateMode::Final,
        None,
    )
    .unwrap();
    write_csv(&path, std::slice::from_ref(&out.summary)).unwrap();
    let rows = read_csv(&path).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].len(), CSV_HEADER.len());
    assert_eq!(rows[0][0], "simple");
    assert_eq!(rows[0][3], "7");
    assert_eq!(rows[0][4], "500");
    // empty result set still writes the header
    let empty = dir.path().join("empty.csv");
    write_csv(&empty, &[]).unwrap();
    assert_eq!(read_csv(&empty).unwrap().len(), 0);
    let text = std::fs::read_to_string(&empty).unwrap();
    assert!(text.starts_with("allocator,epsilon,delta,seed"));
}

#[test]
fn svg_has_one_polyline_per_allocator() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cost.svg");
    let series = vec![
        ("folklore".to_string(), vec![(16.0, 2.1), (64.0, 9.5), (256.0, 38.0)]),
        ("simple".to_string(), vec![(16.0, 3.6), (64.0, 10.2), (256.0, 29.0)]),
    ];
    write_svg(&path, &series).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.matches("<polyline").count(), 2);
    assert!(text.contains("folklore") && text.contains("simple"));
}

#[test]
fn config_file_end_to_end() {
    let cfg = ExperimentConfig::from_str(
        r#"
        [experiment]
        allocator = "rsum"
        seed = 3
        steps = 400
        epsilon_log4 = 4
        [workload]
        kind = "random_item"
        delta_ticks = 4294967296
        "#,
    )
    .unwrap();
    let tick = cfg.tick_config().unwrap();
    let spec = cfg.workload_spec(&tick).unwrap().unwrap();
    let out = run_named_cell(
        &cfg.experiment.allocator,
        tick,
        &AllocParams::default(),
        Some(spec),
        cfg.experiment.steps,
        cfg.experiment.seed,
        ValidateMode::Every,
        None,
    )
    .unwrap();
    assert_eq!(out.summary.steps, 400);
}
