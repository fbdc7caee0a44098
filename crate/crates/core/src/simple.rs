//! Covering-set allocator for item sizes in [ε, 2ε).
//!
//! Sizes partition into ⌈ε^{-1/3}⌉ fixed-stride classes. A covering set — the
//! smallest few items of each class — lives as a contiguous suffix of memory.
//! Inserts append to the covering set. A delete outside the covering set is
//! repaired by moving a same-class covering item into the hole and logically
//! inflating it to the deleted item's size (waste ≤ one class stride). Every
//! ⌊ε^{-1/3}⌋ updates a rebuild resets all logical sizes and rebuilds the
//! covering set from scratch.

use crate::alloc::{AllocError, Allocator, DiagStats, DiffTracker, UpdateOutcome};
use crate::event::UpdateEvent;
use crate::item::{ItemId, ItemStore};
use crate::tick::TickConfig;

pub struct SimpleParams {
    /// Class boundaries in ticks: class i covers [bounds[i], bounds[i+1}).
    pub bounds: Vec<u64>,
    /// Per-class covering target and rebuild period, ⌊ε^{-1/3}⌋.
    pub covering_per_class: u64,
}

impl SimpleParams {
    pub fn new(cfg: &TickConfig) -> Self {
        let eps = cfg.epsilon_ticks;
        let inv_eps = cfg.memory_ticks() as f64 / eps as f64;
        let class_count = inv_eps.powf(1.0 / 3.0).ceil() as u64;
        let covering_per_class = (inv_eps.powf(1.0 / 3.0) + 1e-9).floor() as u64;
        let stride = eps as f64 * inv_eps.powf(-1.0 / 3.0); // ε^{4/3}·memory
        let mut bounds = Vec::with_capacity(class_count as usize + 1);
        bounds.push(eps);
        for i in 1..class_count {
            let b = (eps as f64 + i as f64 * stride).round() as u64;
            bounds.push(b.clamp(bounds[i as usize - 1] + 1, 2 * eps - 1));
        }
        bounds.push(2 * eps);
        Self { bounds, covering_per_class }
    }

    pub fn class_count(&self) -> usize {
        self.bounds.len() - 1
    }

    /// Class of a size in [ε, 2ε), by binary search over frozen boundaries.
    pub fn class_of(&self, size: u64) -> usize {
        debug_assert!(size >= self.bounds[0] && size < *self.bounds.last().unwrap());
        self.bounds.partition_point(|&b| b <= size) - 1
    }
}

pub struct Simple {
    cfg: TickConfig,
    params: SimpleParams,
    items: ItemStore,
    /// Non-covering items in memory order (the prefix).
    prefix: Vec<ItemId>,
    /// Covering set in memory order (the suffix).
    covering: Vec<ItemId>,
    class_of_item: std::collections::BTreeMap<ItemId, usize>,
    updates_since_rebuild: u64,
    started: bool,
    diag: DiagStats,
}

impl Simple {
    pub fn new(cfg: TickConfig) -> Self {
        let params = SimpleParams::new(&cfg);
        Self {
            cfg,
            params,
            items: ItemStore::new(),
            prefix: Vec::new(),
            covering: Vec::new(),
            class_of_item: std::collections::BTreeMap::new(),
            updates_since_rebuild: 0,
            started: false,
            diag: DiagStats::default(),
        }
    }

    pub fn params(&self) -> &SimpleParams {
        &self.params
    }

    pub fn covering_len(&self) -> usize {
        self.covering.len()
    }

    /// Σ logical sizes of the covering set.
    pub fn covering_mass(&self) -> u64 {
        self.covering.iter().map(|&id| self.items.logical_size(id)).sum()
    }

    fn scan_offsets(&self, f: &mut dyn FnMut(ItemId, u64)) {
        let mut off = 0u64;
        for &id in self.prefix.iter().chain(self.covering.iter()) {
            f(id, off);
            off += self.items.logical_size(id);
        }
    }

    /// Rebuild: restore true sizes, pick the min(xᵢ, ⌊ε^{-1/3}⌋) smallest
    /// items of each class (ties by id) as the covering set, arrange
    /// everything contiguous with the covering set as the suffix.
    fn rebuild(&mut self) {
        self.items.reset_all_logical();
        let class_count = self.params.class_count();
        let mut per_class: Vec<Vec<(u64, ItemId)>> = vec![Vec::new(); class_count];
        for &id in self.prefix.iter().chain(self.covering.iter()) {
            let class = self.class_of_item[&id];
            per_class[class].push((self.items.true_size(id), id));
        }
        let mut selected: Vec<ItemId> = Vec::new();
        for bucket in per_class.iter_mut() {
            bucket.sort_unstable();
            for &(_, id) in bucket.iter().take(self.params.covering_per_class as usize) {
                selected.push(id);
            }
        }
        let in_covering: std::collections::BTreeSet<ItemId> = selected.iter().copied().collect();
        // prefix keeps current memory order, covering sorted by (class, size, id)
        let mut new_prefix: Vec<ItemId> = Vec::with_capacity(self.items.len() - selected.len());
        for &id in self.prefix.iter().chain(self.covering.iter()) {
            if !in_covering.contains(&id) {
                new_prefix.push(id);
            }
        }
        let mut new_covering = selected;
        new_covering.sort_unstable_by_key(|&id| (self.class_of_item[&id], self.items.true_size(id), id));
        self.prefix = new_prefix;
        self.covering = new_covering;
        self.diag.rebuilds += 1;
    }

    fn insert(&mut self, id: ItemId, size: u64) -> Result<(), AllocError> {
        let (lo, hi) = (self.params.bounds[0], *self.params.bounds.last().unwrap());
        if size < lo || size >= hi {
            return Err(AllocError::SizeOutOfRegime { size, lo, hi: hi - 1 });
        }
        let limit = self.cfg.load_limit();
        if self.items.total_true() + size > limit {
            return Err(AllocError::LoadExceeded { present: self.items.total_true(), incoming: size, limit });
        }
        self.items.insert(id, size).map_err(|_| AllocError::DuplicateItem(id))?;
        self.class_of_item.insert(id, self.params.class_of(size));
        self.covering.push(id);
        Ok(())
    }

    fn delete(&mut self, id: ItemId) -> Result<(), AllocError> {
        if !self.items.contains(id) {
            return Err(AllocError::UnknownItem(id));
        }
        if let Some(q) = self.covering.iter().position(|&c| c == id) {
            self.covering.remove(q);
        } else {
            let p = self
                .prefix
                .iter()
                .position(|&c| c == id)
                .ok_or_else(|| AllocError::Invariant(format!("{id} in neither prefix nor covering")))?;
            let class = self.class_of_item[&id];
            let deleted_logical = self.items.logical_size(id);
            // largest eligible covering item of the same class (minimizes the
            // inflation waste; the choice is free as long as |I'| ≤ |I|)
            let partner = self
                .covering
                .iter()
                .enumerate()
                .filter(|&(_, &c)| self.class_of_item[&c] == class && self.items.logical_size(c) <= deleted_logical)
                .max_by_key(|&(_, &c)| (self.items.logical_size(c), c))
                .map(|(q, &c)| (q, c));
            let Some((q, partner_id)) = partner else {
                return Err(AllocError::Invariant(format!(
                    "no covering item of class {class} with logical size <= {deleted_logical} for delete of {id}"
                )));
            };
            self.covering.remove(q);
            self.prefix[p] = partner_id;
            self.items.inflate(partner_id, deleted_logical).unwrap();
        }
        self.class_of_item.remove(&id);
        self.items.remove(id).unwrap();
        Ok(())
    }
}

impl Allocator for Simple {
    fn name(&self) -> &'static str {
        "simple"
    }

    fn config(&self) -> &TickConfig {
        &self.cfg
    }

    fn apply(&mut self, event: &UpdateEvent, record_moves: bool) -> Result<UpdateOutcome, AllocError> {
        let tracker = DiffTracker::capture(|f| self.scan_offsets(f));
        let mut rebuilt = false;
        if !self.started || self.updates_since_rebuild >= self.params.covering_per_class {
            self.rebuild();
            self.updates_since_rebuild = 0;
            self.started = true;
            rebuilt = true;
        }
        match *event {
            UpdateEvent::Insert { id, size_ticks } => self.insert(id, size_ticks)?,
            UpdateEvent::Delete { id } => self.delete(id)?,
        }
        self.updates_since_rebuild += 1;
        self.diag.max_waste_ticks = self.diag.max_waste_ticks.max(self.items.gap_mass());
        let (moved_mass, moves, placed_at) =
            tracker.finish(event.id(), record_moves, |f| self.scan_offsets(f), |id| self.items.true_size(id));
        Ok(UpdateOutcome { moved_mass, moves, placed_at, rebuild: rebuilt })
    }

    fn scan_layout(&self, f: &mut dyn FnMut(ItemId, u64, u64)) {
        let mut off = 0u64;
        for &id in self.prefix.iter().chain(self.covering.iter()) {
            let logical = self.items.logical_size(id);
            f(id, off, logical);
            off += logical;
        }
    }

    fn present_mass(&self) -> u64 {
        self.items.total_true()
    }

    fn diag(&self) -> DiagStats {
        self.diag
    }
}
