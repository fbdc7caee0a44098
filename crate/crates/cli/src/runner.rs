//! The experiment harness: builds an allocator, streams a workload through
//! it, validates the layout (every step or at the end), accounts costs, and
//! collects diagnostics. Validation is independent of the allocator: present
//! mass comes from the harness's own event accounting.

use crate::config::ValidateMode;
use realloc_core::alloc::Allocator;
use realloc_core::block::BlockAlloc;
use realloc_core::combined::Combined;
use realloc_core::cost::{amortized_metrics, CostLedger, Metrics};
use realloc_core::event::UpdateEvent;
use realloc_core::folklore::Folklore;
use realloc_core::geo::Geo;
use realloc_core::layout::SortedScanCheck;
use realloc_core::rsum::Rsum;
use realloc_core::simple::Simple;
use realloc_core::tick::TickConfig;
use realloc_core::trace::{TraceHeader, TraceRecord, TraceWriter, TRACE_FORMAT_VERSION};
use realloc_core::workload::{generate, SizeDist, WorkloadKind, WorkloadSpec};
use std::collections::BTreeMap;
use std::io::Write;

#[derive(Debug)]
pub enum RunError {
    Alloc(realloc_core::alloc::AllocError),
    Workload(realloc_core::workload::WorkloadError),
    Validity { step: u64, message: String },
    Io(std::io::Error),
    Config(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Alloc(e) => write!(f, "allocator error: {e}"),
            RunError::Workload(e) => write!(f, "workload error: {e}"),
            RunError::Validity { step, message } => write!(f, "validity violation at step {step}: {message}"),
            RunError::Io(e) => write!(f, "io error: {e}"),
            RunError::Config(msg) => write!(f, "config error: {msg}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

/// Per-allocator knobs beyond the tick config.
#[derive(Clone, Debug)]
pub struct AllocParams {
    pub gamma: f64,
    /// rsum δ; 0 means δ = ε.
    pub delta_ticks: u64,
    /// block size band override; 0 means the per-ε default band.
    pub size_lo: u64,
    pub size_hi: u64,
}

impl Default for AllocParams {
    fn default() -> Self {
        Self { gamma: 0.2, delta_ticks: 0, size_lo: 0, size_hi: 0 }
    }
}

/// The size band the block allocator's acceptance fuzz runs on: capped so
/// the per-size active blocks (C·M_ℓ) stay well under ε·memory, with the
/// band ratio shrinking as ε does to keep the catalog near 10² sizes.
pub fn block_band(cfg: &TickConfig, gamma: f64) -> (u64, u64) {
    let lo_regime = cfg.eps_pow_ticks(5.0).max(1);
    let hi_regime = cfg.eps_pow_ticks(2.0 + gamma);
    // cap so the per-size tier-ℓ blocks (M_ℓ ≈ 4·hi each, an active plus a
    // partial per catalog size) stay a fraction of the ε·memory budget
    let hi = (cfg.epsilon_ticks / 4096).max(lo_regime.saturating_mul(4)).min(hi_regime);
    let ratio = (100.0 * cfg.epsilon_f64()).exp().clamp(1.3, 64.0);
    let lo = ((hi as f64 / ratio) as u64).max(lo_regime).min(hi);
    (lo, hi)
}

/// Reachable target load for the block band. Capped at 2ε so the per-block
/// rounding slack (a few percent of the load) plus the per-size active
/// blocks stay within the ε·memory waste budget, and capped so the
/// steady-state item count keeps per-update validation fast.
pub fn block_target_load(cfg: &TickConfig, band: (u64, u64)) -> f64 {
    let avg = (band.0 + band.1) as f64 / 2.0;
    (12_000.0 * avg / cfg.memory_ticks() as f64)
        .min(2.0 * cfg.epsilon_f64())
        .min(0.25)
}

pub fn build_allocator(
    name: &str,
    cfg: TickConfig,
    seed: u64,
    params: &AllocParams,
) -> Result<Box<dyn Allocator>, RunError> {
    let alloc: Box<dyn Allocator> = match name {
        "folklore" => Box::new(Folklore::new(cfg)),
        "simple" => Box::new(Simple::new(cfg)),
        "geo" => Box::new(Geo::new(cfg, seed).map_err(RunError::Alloc)?),
        "combined" => Box::new(Combined::new(cfg, seed).map_err(RunError::Alloc)?),
        "rsum" => {
            let delta = if params.delta_ticks == 0 { cfg.epsilon_ticks } else { params.delta_ticks };
            Box::new(Rsum::new(cfg, delta, seed).map_err(RunError::Alloc)?)
        }
        "block" => {
            let (lo, hi) = if params.size_lo != 0 {
                (params.size_lo, params.size_hi)
            } else {
                block_band(&cfg, params.gamma)
            };
            Box::new(BlockAlloc::new(cfg, params.gamma, lo, hi).map_err(RunError::Alloc)?)
        }
        other => return Err(RunError::Config(format!("no allocator named '{other}'"))),
    };
    Ok(alloc)
}

/// The regime workload each allocator is exercised on when the config does
/// not pin one explicitly.
pub fn default_workload(
    name: &str,
    cfg: &TickConfig,
    params: &AllocParams,
    steps: u64,
    seed: u64,
) -> Result<WorkloadSpec, RunError> {
    let eps = cfg.epsilon_ticks;
    let kind = match name {
        "folklore" | "simple" => WorkloadKind::Fuzz {
            size_lo: eps,
            size_hi: 2 * eps - 1,
            target_load: 0.9,
            dist: SizeDist::Uniform,
        },
        "geo" => WorkloadKind::Fuzz {
            size_lo: cfg.eps_pow_ticks(5.0).max(1),
            size_hi: cfg.memory_ticks() / 2,
            target_load: 0.8,
            dist: SizeDist::LogUniform,
        },
        "combined" => {
            let eps4 = cfg.eps_pow_ticks(4.0).max(4);
            WorkloadKind::Fuzz {
                size_lo: (eps4 / 4).max(1),
                size_hi: cfg.memory_ticks() / 2,
                target_load: 0.7,
                dist: SizeDist::LogUniform,
            }
        }
        "rsum" => {
            let delta = if params.delta_ticks == 0 { eps } else { params.delta_ticks };
            WorkloadKind::RandomItem { delta_ticks: delta }
        }
        "block" => {
            let band = if params.size_lo != 0 {
                (params.size_lo, params.size_hi)
            } else {
                block_band(cfg, params.gamma)
            };
            WorkloadKind::Fuzz {
                size_lo: band.0,
                size_hi: band.1,
                target_load: block_target_load(cfg, band),
                dist: SizeDist::Uniform,
            }
        }
        other => return Err(RunError::Config(format!("no default workload for '{other}'"))),
    };
    Ok(WorkloadSpec { kind, num_updates: steps, seed })
}

/// What one (allocator, workload, seed) cell produced.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub allocator: String,
    pub epsilon_log4: u32,
    pub resolution_log2: u32,
    pub delta_ticks: u64,
    pub seed: u64,
    pub steps: u64,
    pub metrics: Metrics,
    pub max_waste_ticks: u64,
    pub rebuilds: u64,
    pub mean_probes: f64,
    pub final_digest: u64,
    pub max_load_ticks: u64,
}

pub struct RunOutput {
    pub summary: RunSummary,
    pub ledger: CostLedger,
}

/// Stream `events` through `alloc`, validating and accounting. Every
/// allocator is held to the resizable window, including the mem-block one:
/// leftmost-fit placement keeps its layout within the window on its regime
/// workloads even though it makes no such promise in general.
pub fn run_cell(
    alloc: &mut dyn Allocator,
    events: &[UpdateEvent],
    validate: ValidateMode,
    mut trace: Option<&mut TraceWriter<Box<dyn Write>>>,
) -> Result<RunOutput, RunError> {
    let resizable = true;
    let mut present = 0u64;
    let mut max_load = 0u64;
    let mut sizes: BTreeMap<realloc_core::item::ItemId, u64> = BTreeMap::new();
    let mut ledger = CostLedger::new();
    for (step, ev) in events.iter().enumerate() {
        let update_size = match *ev {
            UpdateEvent::Insert { id, size_ticks } => {
                present += size_ticks;
                max_load = max_load.max(present);
                sizes.insert(id, size_ticks);
                size_ticks
            }
            UpdateEvent::Delete { id } => {
                let s = sizes
                    .remove(&id)
                    .ok_or_else(|| RunError::Validity { step: step as u64, message: format!("delete of absent {id}") })?;
                present -= s;
                s
            }
        };
        let out = alloc.apply(ev, trace.is_some()).map_err(RunError::Alloc)?;
        ledger.push(update_size, out.moved_mass);
        if validate == ValidateMode::Every {
            let mut check = SortedScanCheck::new(alloc.config(), resizable);
            alloc.scan_layout(&mut |id, off, sz| check.push(id, off, sz));
            check
                .finish(present)
                .map_err(|message| RunError::Validity { step: step as u64, message })?;
        }
        if let Some(w) = trace.as_mut() {
            w.record(&TraceRecord {
                step: step as u64,
                event: *ev,
                moves: out.moves,
                moved_mass_ticks: out.moved_mass,
                allocator: alloc.name().to_string(),
            })
            .map_err(|e| RunError::Validity { step: step as u64, message: e.to_string() })?;
        }
    }
    // final validation always runs
    let mut check = SortedScanCheck::new(alloc.config(), resizable);
    alloc.scan_layout(&mut |id, off, sz| check.push(id, off, sz));
    check
        .finish(present)
        .map_err(|message| RunError::Validity { step: events.len() as u64, message })?;

    let metrics = amortized_metrics(&ledger)
        .map_err(|_| RunError::Config("empty event stream".into()))?;
    let diag = alloc.diag();
    let cfg = alloc.config();
    let layout = realloc_core::alloc::layout_of(alloc);
    Ok(RunOutput {
        summary: RunSummary {
            allocator: alloc.name().to_string(),
            epsilon_log4: cfg.epsilon_log4().unwrap_or(0),
            resolution_log2: cfg.resolution_log2,
            delta_ticks: 0,
            seed: 0,
            steps: events.len() as u64,
            metrics,
            max_waste_ticks: diag.max_waste_ticks,
            rebuilds: diag.rebuilds,
            mean_probes: if diag.probe_events == 0 {
                0.0
            } else {
                diag.probes as f64 / diag.probe_events as f64
            },
            final_digest: layout.digest(),
            max_load_ticks: max_load,
        },
        ledger,
    })
}

/// Build allocator + workload from names and run one full cell.
pub fn run_named_cell(
    name: &str,
    cfg: TickConfig,
    params: &AllocParams,
    spec: Option<WorkloadSpec>,
    steps: u64,
    seed: u64,
    validate: ValidateMode,
    trace: Option<&mut TraceWriter<Box<dyn Write>>>,
) -> Result<RunOutput, RunError> {
    let spec = match spec {
        Some(s) => s,
        None => default_workload(name, &cfg, params, steps, seed)?,
    };
    let events = generate(&spec, &cfg).map_err(RunError::Workload)?;
    let mut alloc = build_allocator(name, cfg, seed, params)?;
    let mut out = run_cell(alloc.as_mut(), &events, validate, trace)?;
    out.summary.seed = seed;
    if let WorkloadKind::RandomItem { delta_ticks } = spec.kind {
        out.summary.delta_ticks = delta_ticks;
    }
    Ok(out)
}

pub fn trace_header(name: &str, cfg: &TickConfig, seed: u64) -> TraceHeader {
    TraceHeader {
        format: TRACE_FORMAT_VERSION,
        resolution_log2: cfg.resolution_log2,
        epsilon_ticks: cfg.epsilon_ticks,
        allocator: name.to_string(),
        seed,
    }
}
