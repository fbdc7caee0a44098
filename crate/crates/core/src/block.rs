//! Aligned mem-block allocator for small items.
//!
//! Item sizes are discretized upward onto a (1+ε)-geometric catalog. Each
//! catalog size x owns mem-blocks drawn from ℓ graded power-of-two sizes
//! M_1 > … > M_ℓ; a block holds only size-x items, starts at a multiple of
//! its own size, and at most (3/2)·M_{i-1}/M_i tier-i x-blocks may exist.
//! Inserts fill a per-size active tier-ℓ block, claiming a fresh aligned
//! region when full and merging blocks upward when counts overflow. Deletes
//! backfill the hole from the active block, fracturing a larger block when
//! the last tier-ℓ block drains. Every pseudocode assert is a runtime
//! check; the one the analysis leaves open (the upward-stream bound after a
//! merge) is soft: logged and counted, never fatal.

use crate::alloc::{AllocError, Allocator, DiagStats, UpdateOutcome};
use crate::event::UpdateEvent;
use crate::item::{ItemId, ItemStore};
use crate::layout::MoveRecord;
use crate::tick::{pow2_ceil, pow2_floor, TickConfig};
use std::collections::BTreeMap;

#[derive(Clone, Debug)]
pub struct BlockParams {
    pub gamma: f64,
    /// Tier extents M_1 > … > M_ℓ in ticks, each a power of two.
    pub tiers: Vec<u64>,
    /// Ascending discretization grid; item sizes round up onto it.
    pub catalog: Vec<u64>,
    pub lo: u64,
    pub hi: u64,
}

impl BlockParams {
    /// Derive the tier ladder and size catalog for the band `[lo, hi]`.
    /// M_ℓ is the smallest power of two ≥ 4·(max catalog size); M_1 comes
    /// from the γ-exponent formula; the formula tier count is clamped when
    /// the available octave span between them is smaller.
    pub fn new(cfg: &TickConfig, gamma: f64, lo: u64, hi: u64) -> Result<Self, AllocError> {
        if gamma <= 0.0 || gamma >= 0.25 {
            return Err(AllocError::Invariant(format!("gamma {gamma} outside (0, 1/4)")));
        }
        if lo == 0 || lo > hi || hi >= cfg.memory_ticks() {
            return Err(AllocError::Invariant(format!("bad size band [{lo}, {hi}]")));
        }
        // smallest integer ℓ > 1 with γ/4 < 1/(ℓ−1) < γ/2
        let l_target = (2usize..)
            .find(|&l| {
                let inv = 1.0 / (l - 1) as f64;
                gamma / 4.0 < inv && inv < gamma / 2.0
            })
            .ok_or_else(|| AllocError::Invariant(format!("no tier count fits gamma {gamma}")))?;

        let mut catalog = vec![lo];
        loop {
            let g = *catalog.last().unwrap();
            if g >= hi {
                break;
            }
            let step = crate::tick::mul_div_ceil(g, cfg.epsilon_ticks, cfg.memory_ticks()).max(1);
            catalog.push((g + step).min(hi.max(g + step)));
        }
        let hi_cat = *catalog.last().unwrap();

        let a = 2.0 + gamma;
        let m_last = pow2_ceil(4 * hi_cat);
        let e1 = ((l_target - 1) as f64 + a) / (l_target as f64 + 1.0);
        let m1_raw = cfg.eps_pow_ticks(e1).max(1);
        let m1 = {
            let fl = pow2_floor(m1_raw);
            let ce = pow2_ceil(m1_raw);
            if m1_raw - fl <= ce - m1_raw { fl } else { ce }
        }
        .max(4 * m_last);
        // tier ratios must be ≥ 4: with M_{t-1}/M_t = 2 the floor capacities
        // allow ⌊M_{t-1}/x⌋ = 2⌊M_t/x⌋ + 1 items, which cannot be split into
        // fewer than 3 tier-t blocks and would breach the (3/2) count bound
        let span = (m1 / m_last).trailing_zeros() as usize;
        let l_eff = l_target.min(span / 2 + 1).max(2);
        let top = m1.trailing_zeros() as i64;
        let bot = m_last.trailing_zeros() as i64;
        let mut exps: Vec<i64> = (0..l_eff)
            .map(|i| (top as f64 + (i as f64 / (l_eff - 1) as f64) * (bot - top) as f64).round() as i64)
            .collect();
        exps[0] = top;
        exps[l_eff - 1] = bot;
        for i in 1..l_eff {
            exps[i] = exps[i].min(exps[i - 1] - 2);
        }
        for i in (0..l_eff - 1).rev() {
            exps[i] = exps[i].max(exps[i + 1] + 2);
        }
        let tiers: Vec<u64> = exps.iter().map(|&e| 1u64 << e).collect();
        debug_assert!(tiers.windows(2).all(|w| w[0] >= 4 * w[1] && w[0] % w[1] == 0));
        debug_assert!(*tiers.last().unwrap() >= 4 * hi_cat);
        debug_assert!(cfg.memory_ticks() % tiers[0] == 0);
        Ok(Self { gamma, tiers, catalog, lo, hi: hi_cat })
    }

    pub fn tier_count(&self) -> usize {
        self.tiers.len()
    }

    /// Smallest catalog size ≥ `size`, or None outside the band.
    pub fn discretize(&self, size: u64) -> Option<u64> {
        if size < self.lo || size > self.hi {
            return None;
        }
        let i = self.catalog.partition_point(|&c| c < size);
        Some(self.catalog[i])
    }

    /// Items of size x that fit a tier-t block.
    pub fn cap(&self, t: usize, x: u64) -> u64 {
        self.tiers[t] / x
    }

    /// M_{t-1}/M_t, the base of the (5/4)/(3/2) count bounds.
    pub fn ratio(&self, t: usize) -> u64 {
        debug_assert!(t >= 1);
        self.tiers[t - 1] / self.tiers[t]
    }
}

#[derive(Clone, Debug)]
struct MemBlock {
    tier: usize,
    x: u64,
    /// Aligned start position; None while detached for (re-)placement.
    pos: Option<u64>,
    items: Vec<ItemId>,
    mass_true: u64,
}

#[derive(Clone, Debug)]
struct SizeState {
    /// Arena index of the active (always tier-ℓ) block.
    active: usize,
    /// tier_blocks[t] = arena indices of this size's tier-t blocks.
    tier_blocks: Vec<Vec<usize>>,
}

/// Per-update displacement tracker: original offsets of touched items.
struct Acc {
    first_from: BTreeMap<ItemId, u64>,
}

impl Acc {
    fn new() -> Self {
        Self { first_from: BTreeMap::new() }
    }

    fn touch(&mut self, id: ItemId, from: u64) {
        self.first_from.entry(id).or_insert(from);
    }
}

pub struct BlockAlloc {
    cfg: TickConfig,
    pub params: BlockParams,
    items: ItemStore,
    arena: Vec<MemBlock>,
    by_pos: BTreeMap<u64, usize>,
    by_size: BTreeMap<u64, SizeState>,
    /// item → (arena index, slot).
    loc: BTreeMap<ItemId, (usize, usize)>,
    free_arena: Vec<usize>,
    total_block_mass: u64,
    diag: DiagStats,
    /// Merge passes that could not gather a full upper-tier block.
    pub merge_shortfalls: u64,
}

impl BlockAlloc {
    pub fn new(cfg: TickConfig, gamma: f64, lo: u64, hi: u64) -> Result<Self, AllocError> {
        let params = BlockParams::new(&cfg, gamma, lo, hi)?;
        Ok(Self {
            cfg,
            params,
            items: ItemStore::new(),
            arena: Vec::new(),
            by_pos: BTreeMap::new(),
            by_size: BTreeMap::new(),
            loc: BTreeMap::new(),
            free_arena: Vec::new(),
            total_block_mass: 0,
            diag: DiagStats::default(),
            merge_shortfalls: 0,
        })
    }

    /// (total block mass, total present true mass); their difference is the
    /// waste the claim bounds by ε·memory.
    pub fn waste_report(&self) -> (u64, u64) {
        (self.total_block_mass, self.items.total_true())
    }

    pub fn soft_assert_triggers(&self) -> u64 {
        self.diag.soft_asserts
    }

    /// Per-tier occupancy: (block count, item count) for tiers 1..=ℓ.
    pub fn tier_occupancy(&self) -> Vec<(usize, usize)> {
        let mut out = vec![(0usize, 0usize); self.params.tier_count()];
        for (_, &idx) in &self.by_pos {
            let blk = &self.arena[idx];
            out[blk.tier].0 += 1;
            out[blk.tier].1 += blk.items.len();
        }
        out
    }

    fn last_tier(&self) -> usize {
        self.params.tiers.len() - 1
    }

    fn offset_in(&self, blk: &MemBlock, slot: usize) -> u64 {
        blk.pos.expect("placed block") + slot as u64 * blk.x
    }

    fn offset_of(&self, id: ItemId) -> u64 {
        let (b, slot) = self.loc[&id];
        self.offset_in(&self.arena[b], slot)
    }

    fn count(&self, x: u64, t: usize) -> usize {
        self.by_size.get(&x).map(|s| s.tier_blocks[t].len()).unwrap_or(0)
    }

    /// Create a detached block and register it everywhere except by_pos.
    fn create_block(&mut self, tier: usize, x: u64, items: Vec<ItemId>) -> usize {
        debug_assert!(items.len() as u64 <= self.params.cap(tier, x));
        let mass_true: u64 = items.iter().map(|&i| self.items.true_size(i)).sum();
        let blk = MemBlock { tier, x, pos: None, items, mass_true };
        let idx = if let Some(i) = self.free_arena.pop() {
            self.arena[i] = blk;
            i
        } else {
            self.arena.push(blk);
            self.arena.len() - 1
        };
        for (slot, &id) in self.arena[idx].items.clone().iter().enumerate() {
            self.loc.insert(id, (idx, slot));
        }
        let tier_n = self.params.tier_count();
        self.by_size
            .entry(x)
            .or_insert_with(|| SizeState { active: usize::MAX, tier_blocks: vec![Vec::new(); tier_n] })
            .tier_blocks[tier]
            .push(idx);
        self.total_block_mass += self.params.tiers[tier];
        idx
    }

    /// Remove a block entirely, returning its members in slot order.
    fn destroy_block(&mut self, idx: usize, acc: &mut Acc) -> Vec<ItemId> {
        let blk = std::mem::replace(
            &mut self.arena[idx],
            MemBlock { tier: 0, x: 0, pos: None, items: Vec::new(), mass_true: 0 },
        );
        if let Some(pos) = blk.pos {
            self.by_pos.remove(&pos);
            for (slot, &id) in blk.items.iter().enumerate() {
                acc.touch(id, pos + slot as u64 * blk.x);
            }
        }
        self.total_block_mass -= self.params.tiers[blk.tier];
        let ss = self.by_size.get_mut(&blk.x).unwrap();
        ss.tier_blocks[blk.tier].retain(|&i| i != idx);
        if ss.active == idx {
            ss.active = usize::MAX;
        }
        self.free_arena.push(idx);
        blk.items
    }

    /// Leftmost aligned region of tier-t extent containing no block of
    /// extent ≥ M_t.
    fn find_region(&self, t: usize) -> Option<u64> {
        let m = self.params.tiers[t];
        let mem = self.cfg.memory_ticks();
        let mut cand = 0u64;
        for (&pos, &idx) in &self.by_pos {
            let sz = self.params.tiers[self.arena[idx].tier];
            if sz < m || pos + sz <= cand {
                continue;
            }
            if cand + m <= pos {
                break;
            }
            cand = pos + sz; // pos and sz are multiples of m, so cand stays aligned
        }
        (cand + m <= mem).then_some(cand)
    }

    /// Place a detached block at the leftmost eligible aligned region,
    /// displacing and recursively re-placing smaller blocks found there.
    fn place(&mut self, idx: usize, acc: &mut Acc) -> Result<(), AllocError> {
        let mut queue = vec![idx];
        while let Some(idx) = queue.pop() {
            let t = self.arena[idx].tier;
            let m = self.params.tiers[t];
            let Some(region) = self.find_region(t) else {
                return Err(AllocError::Invariant(format!(
                    "place: no aligned region of {m} ticks (load {} of {})",
                    self.total_block_mass,
                    self.cfg.memory_ticks()
                )));
            };
            let inside: Vec<usize> = self.by_pos.range(region..region + m).map(|(_, &i)| i).collect();
            for evict in inside {
                debug_assert!(self.params.tiers[self.arena[evict].tier] < m);
                let pos = self.arena[evict].pos.take().unwrap();
                self.by_pos.remove(&pos);
                let x = self.arena[evict].x;
                for (slot, &id) in self.arena[evict].items.clone().iter().enumerate() {
                    acc.touch(id, pos + slot as u64 * x);
                }
                queue.push(evict);
            }
            self.arena[idx].pos = Some(region);
            self.by_pos.insert(region, idx);
        }
        Ok(())
    }

    /// Greedy redistribution: one guaranteed tier-ℓ block (≥ 1 item), then
    /// as many full blocks as possible of each tier below `from_tier`,
    /// remainder cascading into the tier-ℓ reserve. Returns created indices.
    fn redistribute(&mut self, x: u64, from_tier: usize, mut pool: Vec<ItemId>) -> Vec<usize> {
        let last = self.last_tier();
        let mut created = Vec::new();
        let reserve_item = pool.pop();
        let mut cursor = 0usize;
        for t in from_tier + 1..=last {
            let cap = self.params.cap(t, x) as usize;
            while pool.len() - cursor >= cap {
                let chunk: Vec<ItemId> = pool[cursor..cursor + cap].to_vec();
                cursor += cap;
                created.push(self.create_block(t, x, chunk));
            }
        }
        let mut tail: Vec<ItemId> = pool[cursor..].to_vec();
        tail.extend(reserve_item);
        created.push(self.create_block(last, x, tail));
        created
    }

    /// Split the smallest existing x-block into smaller tiers, guaranteeing
    /// a tier-ℓ block exists afterwards.
    fn fracture(&mut self, x: u64, acc: &mut Acc) -> Result<(), AllocError> {
        let last = self.last_tier();
        let ss = &self.by_size[&x];
        let t_src = (0..=last)
            .rev()
            .find(|&t| !ss.tier_blocks[t].is_empty())
            .ok_or_else(|| AllocError::Invariant(format!("fracture: size {x} has no blocks")))?;
        if t_src == last {
            return Err(AllocError::Invariant("fracture called with a tier-l block present".into()));
        }
        let src = *self.by_size[&x].tier_blocks[t_src]
            .iter()
            .min_by_key(|&&i| self.arena[i].pos)
            .unwrap();
        let pool = self.destroy_block(src, acc);
        let created = self.redistribute(x, t_src, pool);
        // created tier counts must stay below (3/2)·M_{t-1}/M_t
        let mut made = vec![0u64; self.params.tier_count()];
        for &i in &created {
            made[self.arena[i].tier] += 1;
        }
        for t in t_src + 1..=last {
            if 2 * made[t] >= 3 * self.params.ratio(t) {
                return Err(AllocError::Invariant(format!(
                    "fracture created {} tier-{} blocks, bound {}",
                    made[t],
                    t + 1,
                    3.0 * self.params.ratio(t) as f64 / 2.0
                )));
            }
        }
        for i in created {
            self.place(i, acc)?;
        }
        Ok(())
    }

    /// Combine tier-t x-blocks into tier-(t−1) blocks until the (5/4) bound
    /// holds. Never consumes the active block.
    fn merge(&mut self, x: u64, t: usize, acc: &mut Acc) -> Result<(), AllocError> {
        if t == 0 {
            return Err(AllocError::Invariant("merge on the largest tier".into()));
        }
        // entry bound matches the while-exit: a count of exactly (5/4)·ratio
        // is the settled state, not a violation
        if t >= 2 && 4 * self.count(x, t - 1) as u64 > 5 * self.params.ratio(t - 1) {
            return Err(AllocError::Invariant(format!(
                "merge({}, tier {}): next tier up already at {} blocks",
                x,
                t + 1,
                self.count(x, t - 1)
            )));
        }
        while 4 * self.count(x, t) as u64 > 5 * self.params.ratio(t) {
            let need = self.params.cap(t - 1, x) as usize;
            let active = self.by_size[&x].active;
            let mut cands: Vec<usize> = self.by_size[&x].tier_blocks[t]
                .iter()
                .copied()
                .filter(|&i| i != active)
                .collect();
            // fullest first, minimum k; position as deterministic tie-break
            cands.sort_by_key(|&i| (usize::MAX - self.arena[i].items.len(), self.arena[i].pos));
            let mut chosen = Vec::new();
            let mut gathered = 0usize;
            for i in cands {
                if gathered >= need {
                    break;
                }
                gathered += self.arena[i].items.len();
                chosen.push(i);
            }
            if chosen.is_empty() {
                break;
            }
            if gathered < need {
                // near-empty donor blocks: the upper-tier block comes out
                // partial; counted, the loop still shrinks tier t
                self.merge_shortfalls += 1;
            }
            let mut pool = Vec::with_capacity(gathered);
            for i in chosen {
                pool.extend(self.destroy_block(i, acc));
            }
            let upper: Vec<ItemId> = pool.drain(..need.min(pool.len())).collect();
            let mut created = vec![self.create_block(t - 1, x, upper)];
            if !pool.is_empty() {
                created.extend(self.redistribute(x, t - 1, pool));
            }
            for i in created {
                self.place(i, acc)?;
            }
        }
        if t >= 2 && 2 * self.count(x, t - 1) as u64 >= 3 * self.params.ratio(t - 1) {
            // open in the analysis ("because fractures"): log, never abort
            self.diag.soft_asserts += 1;
        }
        if 4 * self.count(x, t) as u64 > 5 * self.params.ratio(t) {
            return Err(AllocError::Invariant(format!(
                "merge left {} tier-{} blocks above the 5/4 bound",
                self.count(x, t),
                t + 1
            )));
        }
        Ok(())
    }

    /// Pick the active block: lowest-position tier-ℓ block, preferring
    /// non-empty ones.
    fn designate_active(&mut self, x: u64) -> Result<(), AllocError> {
        let last = self.last_tier();
        let tier_l = &self.by_size[&x].tier_blocks[last];
        let pick = tier_l
            .iter()
            .copied()
            .filter(|&i| !self.arena[i].items.is_empty())
            .min_by_key(|&i| self.arena[i].pos)
            .or_else(|| tier_l.iter().copied().min_by_key(|&i| self.arena[i].pos))
            .ok_or_else(|| AllocError::Invariant(format!("no tier-l block of size {x} to designate")))?;
        self.by_size.get_mut(&x).unwrap().active = pick;
        Ok(())
    }

    fn insert(&mut self, id: ItemId, size: u64, acc: &mut Acc) -> Result<u64, AllocError> {
        let x = self.params.discretize(size).ok_or(AllocError::SizeOutOfRegime {
            size,
            lo: self.params.lo,
            hi: self.params.hi,
        })?;
        let limit = self.cfg.load_limit();
        if self.items.total_true() + size > limit {
            return Err(AllocError::LoadExceeded { present: self.items.total_true(), incoming: size, limit });
        }
        self.items.insert(id, size).map_err(|_| AllocError::DuplicateItem(id))?;
        self.items.inflate(id, x).unwrap();

        let last = self.last_tier();
        let needs_new = match self.by_size.get(&x) {
            None => true,
            Some(ss) => {
                ss.active == usize::MAX
                    || self.arena[ss.active].items.len() as u64 >= self.params.cap(last, x)
            }
        };
        if needs_new {
            let region = self.find_region(last).ok_or_else(|| {
                AllocError::Invariant(format!("insert: no empty aligned tier-l region for size {x}"))
            })?;
            let idx = self.create_block(last, x, Vec::new());
            self.arena[idx].pos = Some(region);
            self.by_pos.insert(region, idx);
            self.by_size.get_mut(&x).unwrap().active = idx;
            if 2 * self.count(x, last) as u64 > 3 * self.params.ratio(last) {
                let i0 = (1..=last)
                    .find(|&t| 4 * self.count(x, t) as u64 >= 5 * self.params.ratio(t))
                    .unwrap_or(last);
                for t in i0..=last {
                    self.merge(x, t, acc)?;
                }
                for t in 1..=last {
                    if 2 * self.count(x, t) as u64 > 3 * self.params.ratio(t) {
                        return Err(AllocError::Invariant(format!(
                            "post-merge: {} tier-{} blocks above the 3/2 bound",
                            self.count(x, t),
                            t + 1
                        )));
                    }
                }
                // merges may have consumed the active; re-pick
                if self.by_size[&x].active == usize::MAX {
                    self.designate_active(x)?;
                }
            }
        }
        let active = self.by_size[&x].active;
        if self.arena[active].items.len() as u64 >= self.params.cap(last, x) {
            return Err(AllocError::Invariant(format!("active block of size {x} cannot fit the insert")));
        }
        let slot = self.arena[active].items.len();
        self.arena[active].items.push(id);
        self.arena[active].mass_true += size;
        self.loc.insert(id, (active, slot));
        Ok(self.offset_in(&self.arena[active], slot))
    }

    fn delete(&mut self, id: ItemId, acc: &mut Acc) -> Result<(), AllocError> {
        let &(blk, slot) = self.loc.get(&id).ok_or(AllocError::UnknownItem(id))?;
        let x = self.arena[blk].x;
        let true_size = self.items.true_size(id);
        let active = self.by_size[&x].active;

        if blk == active {
            // swap the last slot into the hole to keep the block packed
            let last_slot = self.arena[blk].items.len() - 1;
            if slot != last_slot {
                let mover = self.arena[blk].items[last_slot];
                acc.touch(mover, self.offset_in(&self.arena[blk], last_slot));
                self.arena[blk].items[slot] = mover;
                self.loc.insert(mover, (blk, slot));
            }
            self.arena[blk].items.pop();
            self.arena[blk].mass_true -= true_size;
        } else {
            // an active-block item fills the hole
            let donor_slot = self.arena[active].items.len().checked_sub(1).ok_or_else(|| {
                AllocError::Invariant(format!("active block of size {x} empty with items elsewhere"))
            })?;
            let mover = self.arena[active].items[donor_slot];
            acc.touch(mover, self.offset_in(&self.arena[active], donor_slot));
            self.arena[active].items.pop();
            let mover_true = self.items.true_size(mover);
            self.arena[active].mass_true -= mover_true;
            self.arena[blk].items[slot] = mover;
            self.arena[blk].mass_true += mover_true;
            self.arena[blk].mass_true -= true_size;
            self.loc.insert(mover, (blk, slot));
        }
        self.loc.remove(&id);
        self.items.remove(id).unwrap();

        let last = self.last_tier();
        let active = self.by_size[&x].active;
        let active_empty = self.arena[active].items.is_empty();
        let other_blocks = self.by_size[&x].tier_blocks.iter().map(Vec::len).sum::<usize>() > 1;
        if active_empty && other_blocks {
            self.destroy_block(active, acc);
            if self.count(x, last) == 0 {
                self.fracture(x, acc)?;
            }
        }
        if self.count(x, last) == 0 {
            return Err(AllocError::Invariant(format!("no tier-l block of size {x} after delete")));
        }
        self.designate_active(x)?;
        Ok(())
    }

    /// Deep structural check used by tests: alignment, packing, single-size,
    /// disjointness (via registry), count bounds, mass accounting.
    pub fn verify_blocks(&self) -> Result<(), String> {
        let mut prev_end = 0u64;
        let mut mass = 0u64;
        for (&pos, &idx) in &self.by_pos {
            let blk = &self.arena[idx];
            let m = self.params.tiers[blk.tier];
            if blk.pos != Some(pos) {
                return Err(format!("registry desync at {pos}"));
            }
            if pos % m != 0 {
                return Err(format!("block at {pos} misaligned for extent {m}"));
            }
            if pos < prev_end {
                return Err(format!("blocks overlap at {pos}"));
            }
            prev_end = pos + m;
            mass += m;
            if blk.items.len() as u64 > self.params.cap(blk.tier, blk.x) {
                return Err(format!("block at {pos} overfull"));
            }
            for (slot, &id) in blk.items.iter().enumerate() {
                if self.loc.get(&id) != Some(&(idx, slot)) {
                    return Err(format!("loc desync for {id}"));
                }
                if self.items.logical_size(id) != blk.x {
                    return Err(format!("{id} logical size is not the block's {}", blk.x));
                }
            }
        }
        if mass != self.total_block_mass {
            return Err("total block mass drift".into());
        }
        for (&x, ss) in &self.by_size {
            for t in 1..self.params.tier_count() {
                if 2 * ss.tier_blocks[t].len() as u64 > 3 * self.params.ratio(t) {
                    return Err(format!(
                        "size {x}: {} tier-{} blocks above the 3/2 bound",
                        ss.tier_blocks[t].len(),
                        t + 1
                    ));
                }
            }
        }
        Ok(())
    }
}

impl Allocator for BlockAlloc {
    fn name(&self) -> &'static str {
        "block"
    }

    fn config(&self) -> &TickConfig {
        &self.cfg
    }

    fn apply(&mut self, event: &UpdateEvent, record_moves: bool) -> Result<UpdateOutcome, AllocError> {
        let mut acc = Acc::new();
        let placed_at = match *event {
            UpdateEvent::Insert { id, size_ticks } => Some(self.insert(id, size_ticks, &mut acc)?),
            UpdateEvent::Delete { id } => {
                self.delete(id, &mut acc)?;
                None
            }
        };
        let mut moved_mass = 0u64;
        let mut moves = Vec::new();
        let event_id = event.id();
        for (&id, &from) in &acc.first_from {
            if !self.items.contains(id) {
                continue; // the deleted item itself
            }
            let to = self.offset_of(id);
            if to != from {
                if id != event_id {
                    moved_mass += self.items.true_size(id);
                }
                if record_moves {
                    moves.push(MoveRecord { id, from_ticks: from, to_ticks: to });
                }
            }
        }
        if record_moves {
            if let (Some(at), UpdateEvent::Insert { id, .. }) = (placed_at, event) {
                moves.push(MoveRecord { id: *id, from_ticks: at, to_ticks: at });
            }
        }
        let (block_mass, present) = self.waste_report();
        self.diag.max_waste_ticks = self.diag.max_waste_ticks.max(block_mass - present);
        Ok(UpdateOutcome { moved_mass, moves, placed_at, rebuild: false })
    }

    fn scan_layout(&self, f: &mut dyn FnMut(ItemId, u64, u64)) {
        for (&pos, &idx) in &self.by_pos {
            let blk = &self.arena[idx];
            for (slot, &id) in blk.items.iter().enumerate() {
                f(id, pos + slot as u64 * blk.x, blk.x);
            }
        }
    }

    fn present_mass(&self) -> u64 {
        self.items.total_true()
    }

    fn diag(&self) -> DiagStats {
        self.diag
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::SortedScanCheck;
    use crate::workload::{gen_fuzz, SizeDist, WorkloadKind, WorkloadSpec};

    fn cfg(k: u32) -> TickConfig {
        TickConfig::pow4(40, k).unwrap()
    }

    fn check_valid(a: &BlockAlloc) {
        let mut check = SortedScanCheck::new(a.config(), false);
        a.scan_layout(&mut |id, off, sz| check.push(id, off, sz));
        check.finish(a.present_mass()).unwrap();
    }

    #[test]
    fn tier_count_formula() {
        // γ = 0.2: γ/4 < 1/(ℓ−1) < γ/2 forces ℓ−1 ∈ (10, 20), smallest ℓ = 12.
        let c = cfg(4);
        let lo = 1u64 << 4;
        let hi = 1u64 << 7;
        let p = BlockParams::new(&c, 0.2, lo, hi).unwrap();
        // wide span available: the formula count survives unclamped
        assert_eq!(p.tier_count(), 12);
        assert!(p.tiers.windows(2).all(|w| w[0] >= 4 * w[1]));
        assert!(p.tiers.windows(2).all(|w| w[0] % w[1] == 0 && w[0] > w[1]));
        assert!(*p.tiers.last().unwrap() >= 4 * p.hi);
        assert_eq!(c.memory_ticks() % p.tiers[0], 0);
    }

    #[test]
    fn tier_ladder_clamps_at_coarse_epsilon() {
        let c = cfg(2);
        let lo = c.eps_pow_ticks(5.0).max(1);
        let p = BlockParams::new(&c, 0.2, lo, 64 * lo).unwrap();
        assert!(p.tier_count() >= 2);
        assert!(p.tier_count() <= 12);
        assert!(*p.tiers.last().unwrap() >= 4 * p.hi);
    }

    #[test]
    fn discretize_rounds_up_onto_catalog() {
        let c = cfg(3);
        let p = BlockParams::new(&c, 0.2, 1 << 10, 1 << 16).unwrap();
        for w in p.catalog.windows(2) {
            assert!(w[0] < w[1]);
        }
        let mut rng = crate::rng::DetRng::new(3);
        for _ in 0..2_000 {
            let s = rng.range_inclusive(p.lo, p.hi);
            let x = p.discretize(s).unwrap();
            assert!(x >= s);
            let i = p.catalog.iter().position(|&c| c == x).unwrap();
            if i > 0 {
                assert!(p.catalog[i - 1] < s);
            }
        }
        assert_eq!(p.discretize(p.lo - 1), None);
    }

    #[test]
    fn first_insert_claims_leftmost_region() {
        let c = cfg(3);
        let mut a = BlockAlloc::new(c, 0.2, 1 << 10, 1 << 16).unwrap();
        let out = a.apply(&UpdateEvent::Insert { id: ItemId(0), size_ticks: 1000 + (1 << 10) }, true).unwrap();
        assert_eq!(out.placed_at, Some(0));
        assert_eq!(out.moved_mass, 0);
        a.verify_blocks().unwrap();
        check_valid(&a);
    }

    #[test]
    fn delete_last_item_keeps_empty_active() {
        let c = cfg(3);
        let mut a = BlockAlloc::new(c, 0.2, 1 << 10, 1 << 16).unwrap();
        a.apply(&UpdateEvent::Insert { id: ItemId(0), size_ticks: 1 << 12 }, false).unwrap();
        a.apply(&UpdateEvent::Delete { id: ItemId(0) }, false).unwrap();
        // the size keeps one (empty) active block
        let (block_mass, present) = a.waste_report();
        assert_eq!(present, 0);
        assert_eq!(block_mass, *a.params.tiers.last().unwrap());
        a.verify_blocks().unwrap();
    }

    #[test]
    fn delete_in_nonactive_backfills_from_active() {
        let c = cfg(3);
        let mut a = BlockAlloc::new(c, 0.2, 1 << 10, 1 << 16).unwrap();
        let x = a.params.catalog[0];
        let cap = a.params.cap(a.last_tier(), x);
        // fill one active block completely, then one more item → new active
        let mut id = 0u64;
        for _ in 0..=cap {
            a.apply(&UpdateEvent::Insert { id: ItemId(id), size_ticks: x }, false).unwrap();
            id += 1;
        }
        a.verify_blocks().unwrap();
        // item 0 lives in the old (full, non-active) block
        let out = a.apply(&UpdateEvent::Delete { id: ItemId(0) }, true).unwrap();
        // exactly one item moved: the donor from the active block
        assert_eq!(out.moved_mass, x);
        assert_eq!(out.moves.len(), 1);
        a.verify_blocks().unwrap();
        check_valid(&a);
    }

    #[test]
    fn fracture_conserves_items_and_creates_tier_l() {
        let c = cfg(3);
        let mut a = BlockAlloc::new(c, 0.2, 1 << 10, 1 << 16).unwrap();
        let x = a.params.catalog[0];
        let last = a.last_tier();
        let cap_l = a.params.cap(last, x);
        // drive enough inserts that merges form an upper-tier block
        let need = (5 * a.params.ratio(last) / 4 + 2) * cap_l;
        let mut id = 0u64;
        for _ in 0..need {
            a.apply(&UpdateEvent::Insert { id: ItemId(id), size_ticks: x }, false).unwrap();
            id += 1;
        }
        a.verify_blocks().unwrap();
        assert!(
            (0..last).any(|t| a.count(x, t) > 0),
            "merges should have formed an upper-tier block"
        );
        // now delete down until the last tier-ℓ block drains and a fracture
        // must reintroduce one
        let n_before = a.items.len() as u64;
        for del in 0..n_before {
            a.apply(&UpdateEvent::Delete { id: ItemId(del) }, false).unwrap();
            a.verify_blocks().unwrap();
            assert!(a.count(x, last) > 0, "tier-l block must always exist");
        }
        assert_eq!(a.items.len(), 0);
    }

    #[test]
    fn fuzz_holds_invariants_and_waste_claim() {
        let c = cfg(2);
        let lo = c.eps_pow_ticks(5.0).max(1);
        let spec = WorkloadSpec {
            kind: WorkloadKind::Fuzz {
                size_lo: lo,
                size_hi: 64 * lo,
                target_load: 0.3,
                dist: SizeDist::Uniform,
            },
            num_updates: 4_000,
            seed: 71,
        };
        let events = gen_fuzz(&spec, &c).unwrap();
        let mut a = BlockAlloc::new(c, 0.2, lo, 64 * lo).unwrap();
        for (i, ev) in events.iter().enumerate() {
            a.apply(ev, false).unwrap();
            if i % 16 == 0 {
                a.verify_blocks().unwrap();
            }
            check_valid(&a);
            let (block_mass, present) = a.waste_report();
            assert!(
                block_mass - present <= c.epsilon_ticks,
                "waste {} above epsilon {}",
                block_mass - present,
                c.epsilon_ticks
            );
        }
        a.verify_blocks().unwrap();
    }

    #[test]
    fn regime_rejected_outside_band() {
        let c = cfg(3);
        let mut a = BlockAlloc::new(c, 0.2, 1 << 10, 1 << 16).unwrap();
        for bad in [1u64 << 9, (1 << 20) + 5] {
            let err = a.apply(&UpdateEvent::Insert { id: ItemId(0), size_ticks: bad }, false).unwrap_err();
            assert!(matches!(err, AllocError::SizeOutOfRegime { .. }));
        }
    }
}

