//! Shared workload builders for the criterion benches.

use realloc_core::event::UpdateEvent;
use realloc_core::tick::TickConfig;
use realloc_core::workload::{generate, SizeDist, WorkloadKind, WorkloadSpec};

pub fn cfg(k: u32) -> TickConfig {
    TickConfig::pow4(40, k).unwrap()
}

pub fn band_fuzz(cfg: &TickConfig, lo: u64, hi: u64, load: f64, steps: u64) -> Vec<UpdateEvent> {
    let spec = WorkloadSpec {
        kind: WorkloadKind::Fuzz { size_lo: lo, size_hi: hi, target_load: load, dist: SizeDist::Uniform },
        num_updates: steps,
        seed: 0xbe9c,
    };
    generate(&spec, cfg).unwrap()
}

pub fn random_item(cfg: &TickConfig, delta: u64, steps: u64) -> Vec<UpdateEvent> {
    let spec = WorkloadSpec {
        kind: WorkloadKind::RandomItem { delta_ticks: delta },
        num_updates: steps,
        seed: 0xbe9c,
    };
    generate(&spec, cfg).unwrap()
}
