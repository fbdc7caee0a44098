//! Update-stream generators: the two-size lower-bound sequence, δ-random-item
//! sequences, and load-constrained fuzz streams. Pure functions of
//! (spec, seed); every stream keeps Σ present true sizes ≤ (1 − ε)·memory at
//! every prefix.

use crate::event::UpdateEvent;
use crate::item::ItemId;
use crate::rng::DetRng;
use crate::tick::TickConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SizeDist {
    #[default]
    Uniform,
    /// Log-uniform over [lo, hi]: exercises the whole size spectrum instead
    /// of concentrating near hi the way tick-uniform sampling does.
    LogUniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkloadKind {
    LowerBound,
    RandomItem { delta_ticks: u64 },
    Fuzz { size_lo: u64, size_hi: u64, target_load: f64, dist: SizeDist },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    pub num_updates: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum WorkloadError {
    EpsilonNotPow4,
    EpsilonRootNotMultipleOf4 { root: u64 },
    DeltaTooLarge { delta: u64, max: u64 },
    InfeasibleSizes { lo: u64, hi: u64, limit: u64 },
    BadTargetLoad(f64),
}

impl std::fmt::Display for WorkloadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WorkloadError::EpsilonNotPow4 => write!(f, "epsilon must be 4^-k"),
            WorkloadError::EpsilonRootNotMultipleOf4 { root } => {
                write!(f, "epsilon^-1/2 = {root} must be a multiple of 4")
            }
            WorkloadError::DeltaTooLarge { delta, max } => {
                write!(f, "delta {delta} exceeds memory/8 = {max}")
            }
            WorkloadError::InfeasibleSizes { lo, hi, limit } => {
                write!(f, "size range [{lo}, {hi}] infeasible under load limit {limit}")
            }
            WorkloadError::BadTargetLoad(t) => write!(f, "target load {t} not in [0, 1-eps]"),
        }
    }
}

impl std::error::Error for WorkloadError {}

/// The adversarial two-size sequence: n inserts of size s₁ = ε^{1/2} + 2ε
/// ("A"s), then n rounds of (delete the oldest surviving A, insert a "B" of
/// size s₂ = ε^{1/2}), with n = ε^{-1/2}/4.
///
/// The generator deletes A's in FIFO insertion order: it cannot see the
/// layout, and the lower bound holds for any fixed deletion order.
pub fn gen_lower_bound(cfg: &TickConfig) -> Result<Vec<UpdateEvent>, WorkloadError> {
    let k = cfg.epsilon_log4().ok_or(WorkloadError::EpsilonNotPow4)?;
    let root = 1u64 << k; // ε^{-1/2}
    if root % 4 != 0 {
        return Err(WorkloadError::EpsilonRootNotMultipleOf4 { root });
    }
    let n = root / 4;
    let s2 = cfg.memory_ticks() >> k; // ε^{1/2}
    let s1 = s2 + 2 * cfg.epsilon_ticks;
    let mut events = Vec::with_capacity(3 * n as usize);
    for i in 0..n {
        events.push(UpdateEvent::Insert { id: ItemId(i), size_ticks: s1 });
    }
    for i in 0..n {
        events.push(UpdateEvent::Delete { id: ItemId(i) });
        events.push(UpdateEvent::Insert { id: ItemId(n + i), size_ticks: s2 });
    }
    Ok(events)
}

/// Sizes of the two roles in the lower-bound sequence, (s1, s2).
pub fn lower_bound_sizes(cfg: &TickConfig) -> Result<(u64, u64), WorkloadError> {
    let k = cfg.epsilon_log4().ok_or(WorkloadError::EpsilonNotPow4)?;
    let s2 = cfg.memory_ticks() >> k;
    Ok((s2 + 2 * cfg.epsilon_ticks, s2))
}

/// δ-random-item sequence: ⌊δ⁻¹/4⌋ inserts with sizes uniform on the tick
/// grid of [δ, 2δ], then alternating (delete a uniformly random present
/// item, insert another random-size item). Present count stays within one of
/// ⌊δ⁻¹/4⌋.
pub fn gen_random_item(spec: &WorkloadSpec, cfg: &TickConfig) -> Result<Vec<UpdateEvent>, WorkloadError> {
    let delta = match spec.kind {
        WorkloadKind::RandomItem { delta_ticks } => delta_ticks,
        _ => panic!("gen_random_item called with non-random-item spec"),
    };
    let max = cfg.memory_ticks() / 8;
    if delta == 0 || delta > max {
        return Err(WorkloadError::DeltaTooLarge { delta, max });
    }
    let fill = cfg.memory_ticks() / (4 * delta); // ⌊δ⁻¹/4⌋
    let mut rng = DetRng::new(spec.seed);
    let mut events = Vec::with_capacity(spec.num_updates as usize);
    let mut present: Vec<ItemId> = Vec::new();
    let mut next_id = 0u64;
    let mut fresh = |present: &mut Vec<ItemId>, rng: &mut DetRng| {
        let id = ItemId(next_id);
        next_id += 1;
        present.push(id);
        UpdateEvent::Insert { id, size_ticks: rng.range_inclusive(delta, 2 * delta) }
    };
    while (events.len() as u64) < spec.num_updates.min(fill) {
        let ev = fresh(&mut present, &mut rng);
        events.push(ev);
    }
    let mut delete_turn = true;
    while (events.len() as u64) < spec.num_updates {
        if delete_turn {
            let idx = rng.index(present.len());
            let id = present.swap_remove(idx);
            events.push(UpdateEvent::Delete { id });
        } else {
            let ev = fresh(&mut present, &mut rng);
            events.push(ev);
        }
        delete_turn = !delete_turn;
    }
    Ok(events)
}

/// Load-targeted fuzz: random inserts and deletes of random present items,
/// with the insert probability biased to hold the present mass near
/// target_load·memory, never exceeding (1 − ε)·memory.
pub fn gen_fuzz(spec: &WorkloadSpec, cfg: &TickConfig) -> Result<Vec<UpdateEvent>, WorkloadError> {
    let (lo, hi, target, dist) = match spec.kind {
        WorkloadKind::Fuzz { size_lo, size_hi, target_load, dist } => (size_lo, size_hi, target_load, dist),
        _ => panic!("gen_fuzz called with non-fuzz spec"),
    };
    let limit = cfg.load_limit();
    if lo == 0 || lo > hi || lo > limit {
        return Err(WorkloadError::InfeasibleSizes { lo, hi, limit });
    }
    if !(0.0..=1.0).contains(&target) || target * cfg.memory_ticks() as f64 > limit as f64 {
        return Err(WorkloadError::BadTargetLoad(target));
    }
    let target_ticks = (target * cfg.memory_ticks() as f64) as u64;
    let mut rng = DetRng::new(spec.seed);
    let mut events = Vec::with_capacity(spec.num_updates as usize);
    let mut present: Vec<(ItemId, u64)> = Vec::new();
    let mut load = 0u64;
    let mut next_id = 0u64;
    let log_ratio = (hi as f64 / lo as f64).ln();
    while (events.len() as u64) < spec.num_updates {
        let want_insert = if present.is_empty() {
            true
        } else if load < target_ticks {
            rng.unit_f64() < 0.85
        } else {
            rng.unit_f64() < 0.15
        };
        if want_insert {
            let size = match dist {
                SizeDist::Uniform => rng.range_inclusive(lo, hi),
                SizeDist::LogUniform => {
                    let v = (lo as f64 * (rng.unit_f64() * log_ratio).exp()).round() as u64;
                    v.clamp(lo, hi)
                }
            };
            if load + size > limit {
                // infeasible draw: fall back to a delete (present must be
                // non-empty here, since an empty memory admits any lo ≤ limit)
                if present.is_empty() {
                    continue;
                }
                let idx = rng.index(present.len());
                let (id, sz) = present.swap_remove(idx);
                load -= sz;
                events.push(UpdateEvent::Delete { id });
                continue;
            }
            let id = ItemId(next_id);
            next_id += 1;
            present.push((id, size));
            load += size;
            events.push(UpdateEvent::Insert { id, size_ticks: size });
        } else {
            let idx = rng.index(present.len());
            let (id, sz) = present.swap_remove(idx);
            load -= sz;
            events.push(UpdateEvent::Delete { id });
        }
    }
    Ok(events)
}

pub fn generate(spec: &WorkloadSpec, cfg: &TickConfig) -> Result<Vec<UpdateEvent>, WorkloadError> {
    match spec.kind {
        WorkloadKind::LowerBound => gen_lower_bound(cfg),
        WorkloadKind::RandomItem { .. } => gen_random_item(spec, cfg),
        WorkloadKind::Fuzz { .. } => gen_fuzz(spec, cfg),
    }
}

/// Independent replay accumulator: walks a stream and returns the maximum
/// prefix load, erroring on malformed streams (unknown deletes, duplicate
/// inserts). Used to check the load-factor invariant on generated streams.
pub fn replay_max_load(events: &[UpdateEvent]) -> Result<u64, String> {
    let mut sizes = std::collections::BTreeMap::new();
    let mut load = 0u64;
    let mut max_load = 0u64;
    for ev in events {
        match *ev {
            UpdateEvent::Insert { id, size_ticks } => {
                if sizes.insert(id, size_ticks).is_some() {
                    return Err(format!("duplicate insert of {id}"));
                }
                load += size_ticks;
                max_load = max_load.max(load);
            }
            UpdateEvent::Delete { id } => {
                let sz = sizes.remove(&id).ok_or_else(|| format!("delete of absent {id}"))?;
                load -= sz;
            }
        }
    }
    Ok(max_load)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_bound_shapes() {
        // ε = 4^-4 = 2^-8: n = 4, 12 events, s1 = 2^-4 + 2^-7 of memory.
        let cfg = TickConfig::pow4(40, 4).unwrap();
        let events = gen_lower_bound(&cfg).unwrap();
        assert_eq!(events.len(), 12);
        let (s1, s2) = lower_bound_sizes(&cfg).unwrap();
        assert_eq!(s1, (1u64 << 36) + (1u64 << 33));
        assert_eq!(s2, 1u64 << 36);

        // ε = 4^-6 = 2^-12: n = 16, 48 events.
        let cfg = TickConfig::pow4(40, 6).unwrap();
        assert_eq!(gen_lower_bound(&cfg).unwrap().len(), 48);

        // ε = 4^-3 = 2^-6: ε^{-1/2} = 8 ∈ 4N, n = 2, 6 events.
        let cfg = TickConfig::pow4(40, 3).unwrap();
        assert_eq!(gen_lower_bound(&cfg).unwrap().len(), 6);

        // ε = 4^-1: ε^{-1/2} = 2 not a multiple of 4.
        let cfg = TickConfig::pow4(40, 1).unwrap();
        assert!(matches!(
            gen_lower_bound(&cfg),
            Err(WorkloadError::EpsilonRootNotMultipleOf4 { root: 2 })
        ));
    }

    #[test]
    fn lower_bound_uses_exactly_two_sizes_and_fits() {
        let cfg = TickConfig::pow4(40, 4).unwrap();
        let events = gen_lower_bound(&cfg).unwrap();
        let mut sizes: Vec<u64> = events
            .iter()
            .filter_map(|e| match e {
                UpdateEvent::Insert { size_ticks, .. } => Some(*size_ticks),
                _ => None,
            })
            .collect();
        sizes.sort_unstable();
        sizes.dedup();
        assert_eq!(sizes.len(), 2);
        assert!(replay_max_load(&events).unwrap() <= cfg.load_limit());
    }

    #[test]
    fn random_item_fill_then_alternation() {
        // δ = memory/64 → 16 initial inserts, then strict alternation.
        let cfg = TickConfig::pow4(40, 3).unwrap();
        let delta = cfg.memory_ticks() / 64;
        let spec = WorkloadSpec {
            kind: WorkloadKind::RandomItem { delta_ticks: delta },
            num_updates: 1_000,
            seed: 99,
        };
        let events = gen_random_item(&spec, &cfg).unwrap();
        assert!(events[..16].iter().all(|e| e.is_insert()));
        assert!(!events[16].is_insert());

        // present count stays within 1 of 16 after the fill
        let mut present = 0i64;
        for (i, ev) in events.iter().enumerate() {
            present += if ev.is_insert() { 1 } else { -1 };
            if i >= 16 {
                assert!((15..=17).contains(&present), "step {i}: {present}");
            }
        }
        // after 1000 updates: 16 or 17 items
        assert!((16..=17).contains(&present));
    }

    #[test]
    fn identical_seeds_identical_streams() {
        let cfg = TickConfig::pow4(40, 2).unwrap();
        let spec = WorkloadSpec {
            kind: WorkloadKind::Fuzz {
                size_lo: cfg.epsilon_ticks,
                size_hi: 2 * cfg.epsilon_ticks - 1,
                target_load: 0.8,
                dist: SizeDist::Uniform,
            },
            num_updates: 2_000,
            seed: 7,
        };
        let a = gen_fuzz(&spec, &cfg).unwrap();
        let b = gen_fuzz(&spec, &cfg).unwrap();
        assert_eq!(a, b);

        let spec2 = WorkloadSpec { seed: 8, ..spec };
        assert_ne!(gen_fuzz(&spec2, &cfg).unwrap(), a);
    }

    #[test]
    fn fuzz_respects_load_limit() {
        let cfg = TickConfig::pow4(40, 3).unwrap();
        let spec = WorkloadSpec {
            kind: WorkloadKind::Fuzz {
                size_lo: cfg.epsilon_ticks,
                size_hi: 2 * cfg.epsilon_ticks - 1,
                target_load: 0.9,
                dist: SizeDist::Uniform,
            },
            num_updates: 100_000,
            seed: 3,
        };
        let events = gen_fuzz(&spec, &cfg).unwrap();
        assert_eq!(events.len(), 100_000);
        assert!(replay_max_load(&events).unwrap() <= cfg.load_limit());
    }

    #[test]
    fn fuzz_equal_sizes_and_zero_target() {
        let cfg = TickConfig::pow4(40, 2).unwrap();
        let size = cfg.epsilon_ticks;
        let spec = WorkloadSpec {
            kind: WorkloadKind::Fuzz { size_lo: size, size_hi: size, target_load: 0.0, dist: SizeDist::Uniform },
            num_updates: 500,
            seed: 1,
        };
        let events = gen_fuzz(&spec, &cfg).unwrap();
        for ev in &events {
            if let UpdateEvent::Insert { size_ticks, .. } = ev {
                assert_eq!(*size_ticks, size);
            }
        }
        // target 0: mostly churn near empty, load never builds up
        assert!(replay_max_load(&events).unwrap() <= 6 * size);
    }

    #[test]
    fn fuzz_rejects_infeasible() {
        let cfg = TickConfig::pow4(40, 2).unwrap();
        let spec = WorkloadSpec {
            kind: WorkloadKind::Fuzz {
                size_lo: cfg.memory_ticks(),
                size_hi: cfg.memory_ticks(),
                target_load: 0.5,
                dist: SizeDist::Uniform,
            },
            num_updates: 10,
            seed: 1,
        };
        assert!(matches!(gen_fuzz(&spec, &cfg), Err(WorkloadError::InfeasibleSizes { .. })));
    }

    #[test]
    fn log_uniform_spans_decades() {
        let cfg = TickConfig::pow4(40, 3).unwrap();
        let spec = WorkloadSpec {
            kind: WorkloadKind::Fuzz {
                size_lo: 1 << 10,
                size_hi: 1 << 36,
                target_load: 0.5,
                dist: SizeDist::LogUniform,
            },
            num_updates: 5_000,
            seed: 5,
        };
        let events = gen_fuzz(&spec, &cfg).unwrap();
        let (mut small, mut big) = (0, 0);
        for ev in &events {
            if let UpdateEvent::Insert { size_ticks, .. } = ev {
                if *size_ticks < 1 << 20 {
                    small += 1;
                }
                if *size_ticks > 1 << 30 {
                    big += 1;
                }
            }
        }
        assert!(small > 50, "small draws {small}");
        assert!(big > 50, "big draws {big}");
        assert!(replay_max_load(&events).unwrap() <= cfg.load_limit());
    }
}

