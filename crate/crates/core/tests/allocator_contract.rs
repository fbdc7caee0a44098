//! Cross-allocator contract checks: every allocator, on its own regime's
//! workload, keeps the layout valid and the resizable window intact after
//! every update, and its recorded traces replay bit-exactly through the core
//! mutation path.

use realloc_core::alloc::{layout_of, Allocator};
use realloc_core::block::BlockAlloc;
use realloc_core::combined::Combined;
use realloc_core::event::UpdateEvent;
use realloc_core::folklore::Folklore;
use realloc_core::geo::Geo;
use realloc_core::layout::SortedScanCheck;
use realloc_core::rsum::Rsum;
use realloc_core::simple::Simple;
use realloc_core::tick::TickConfig;
use realloc_core::trace::{replay, TraceHeader, TraceRecord, TRACE_FORMAT_VERSION};
use realloc_core::workload::{generate, SizeDist, WorkloadKind, WorkloadSpec};

fn drive(
    alloc: &mut dyn Allocator,
    events: &[UpdateEvent],
    resizable: bool,
    record: bool,
) -> (u64, Vec<TraceRecord>) {
    let mut present = 0u64;
    let mut sizes = std::collections::BTreeMap::new();
    let mut records = Vec::new();
    let mut total_moved = 0u64;
    for (step, ev) in events.iter().enumerate() {
        match *ev {
            UpdateEvent::Insert { id, size_ticks } => {
                present += size_ticks;
                sizes.insert(id, size_ticks);
            }
            UpdateEvent::Delete { id } => {
                present -= sizes.remove(&id).unwrap();
            }
        }
        let out = alloc.apply(ev, record).unwrap_or_else(|e| panic!("step {step}: {e}"));
        total_moved += out.moved_mass;
        let mut check = SortedScanCheck::new(alloc.config(), resizable);
        alloc.scan_layout(&mut |id, off, sz| check.push(id, off, sz));
        if let Err(msg) = check.finish(present) {
            panic!("step {step} ({ev:?}): {msg}");
        }
        if record {
            records.push(TraceRecord {
                step: step as u64,
                event: *ev,
                moves: out.moves,
                moved_mass_ticks: out.moved_mass,
                allocator: alloc.name().to_string(),
            });
        }
    }
    (total_moved, records)
}

fn replay_matches(alloc: &dyn Allocator, records: Vec<TraceRecord>) {
    let cfg = alloc.config();
    let header = TraceHeader {
        format: TRACE_FORMAT_VERSION,
        resolution_log2: cfg.resolution_log2,
        epsilon_ticks: cfg.epsilon_ticks,
        allocator: alloc.name().to_string(),
        seed: 0,
    };
    let result = replay(&header, &records).expect("replay clean");
    let live = layout_of(alloc);
    assert_eq!(result.layout, live, "replayed layout must equal the live one");
    assert_eq!(result.final_digest, live.digest());
}

fn fuzz_spec(cfg: &TickConfig, lo: u64, hi: u64, load: f64, dist: SizeDist, n: u64, seed: u64) -> Vec<UpdateEvent> {
    generate(
        &WorkloadSpec { kind: WorkloadKind::Fuzz { size_lo: lo, size_hi: hi, target_load: load, dist }, num_updates: n, seed },
        cfg,
    )
    .unwrap()
}

#[test]
fn folklore_fuzz_valid_and_replayable() {
    let cfg = TickConfig::pow4(40, 3).unwrap();
    let events = fuzz_spec(&cfg, cfg.epsilon_ticks, 2 * cfg.epsilon_ticks - 1, 0.9, SizeDist::Uniform, 2_000, 101);
    let mut a = Folklore::new(cfg);
    let (_, records) = drive(&mut a, &events, true, true);
    replay_matches(&a, records);
}

#[test]
fn simple_fuzz_valid_and_replayable() {
    let cfg = TickConfig::pow4(40, 3).unwrap();
    let events = fuzz_spec(&cfg, cfg.epsilon_ticks, 2 * cfg.epsilon_ticks - 1, 0.9, SizeDist::Uniform, 2_000, 102);
    let mut a = Simple::new(cfg);
    let (_, records) = drive(&mut a, &events, true, true);
    replay_matches(&a, records);
}

#[test]
fn geo_fuzz_valid_and_replayable() {
    let cfg = TickConfig::pow4(40, 2).unwrap();
    let events = fuzz_spec(&cfg, 1 << 20, 1 << 38, 0.8, SizeDist::LogUniform, 2_000, 103);
    let mut a = Geo::new(cfg, 9).unwrap();
    let (_, records) = drive(&mut a, &events, true, true);
    replay_matches(&a, records);
    a.verify_levels().unwrap();
}

#[test]
fn combined_fuzz_valid_and_replayable() {
    let cfg = TickConfig::pow4(40, 2).unwrap();
    let events = fuzz_spec(&cfg, 1 << 22, 1 << 37, 0.7, SizeDist::LogUniform, 1_500, 104);
    let mut a = Combined::new(cfg, 10).unwrap();
    let (_, records) = drive(&mut a, &events, true, true);
    replay_matches(&a, records);
}

#[test]
fn rsum_random_item_valid_and_replayable() {
    let cfg = TickConfig::pow4(40, 4).unwrap();
    let spec = WorkloadSpec {
        kind: WorkloadKind::RandomItem { delta_ticks: cfg.epsilon_ticks },
        num_updates: 2_000,
        seed: 105,
    };
    let events = generate(&spec, &cfg).unwrap();
    let mut a = Rsum::new(cfg, cfg.epsilon_ticks, 11).unwrap();
    let (_, records) = drive(&mut a, &events, true, true);
    replay_matches(&a, records);
    a.verify_purity().unwrap();
    a.verify_regions().unwrap();
}

#[test]
fn block_fuzz_valid_and_replayable() {
    let cfg = TickConfig::pow4(40, 2).unwrap();
    let lo = cfg.eps_pow_ticks(5.0).max(1);
    let events = fuzz_spec(&cfg, lo, 64 * lo, 0.3, SizeDist::Uniform, 2_000, 106);
    let mut a = BlockAlloc::new(cfg, 0.2, lo, 64 * lo).unwrap();
    // block is not a resizable allocator by construction; validity only here
    let (_, records) = drive(&mut a, &events, false, true);
    replay_matches(&a, records);
    a.verify_blocks().unwrap();
}

#[test]
fn lower_bound_sequence_runs_on_regime_compatible_allocators() {
    for k in [4u32, 5, 6] {
        // resolution scales so ε⁵ (and the combined allocator's (ε/4)⁵)
        // stays at least one tick
        let res = 40.max(10 * k);
        let cfg = TickConfig::pow4(res, k).unwrap();
        let events = generate(
            &WorkloadSpec { kind: WorkloadKind::LowerBound, num_updates: 0, seed: 0 },
            &cfg,
        )
        .unwrap();
        let delta = cfg.memory_ticks() >> k; // δ = s2 covers both sizes
        let mut allocs: Vec<Box<dyn Allocator>> = vec![
            Box::new(Folklore::new(cfg)),
            Box::new(Geo::new(cfg, 12).unwrap()),
            Box::new(Rsum::new(cfg, delta, 14).unwrap()),
        ];
        if 10 * (k + 1) <= 62 {
            let cfg_c = TickConfig::pow4(40.max(10 * (k + 1)), k).unwrap();
            allocs.push(Box::new(Combined::new(cfg_c, 13).unwrap()));
        }
        for a in allocs.iter_mut() {
            let evs = if a.config().resolution_log2 == cfg.resolution_log2 {
                events.clone()
            } else {
                generate(&WorkloadSpec { kind: WorkloadKind::LowerBound, num_updates: 0, seed: 0 }, a.config())
                    .unwrap()
            };
            drive(a.as_mut(), &evs, true, false);
        }
    }
}

