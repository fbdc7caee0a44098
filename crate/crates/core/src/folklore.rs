//! Baseline allocator: on an insert of size k, scan fixed windows of size
//! w = ⌈2k/ε⌉ left to right (including the partial tail window), pick the
//! leftmost one with at least k free space, compact the items lying fully
//! inside it against its left edge, and place the item in the freed gap.
//! Items straddling a window boundary are immovable for that window. Deletes
//! remove the item and leave the gap; resizability is restored lazily by
//! closing rightmost gaps whenever the L + ε window is violated, and that
//! cost is charged to the update like any other.

use crate::alloc::{AllocError, Allocator, DiagStats, UpdateOutcome};
use crate::event::UpdateEvent;
use crate::item::{ItemId, ItemStore};
use crate::layout::MoveRecord;
use crate::tick::{mul_div_ceil, TickConfig};
use std::collections::BTreeMap;

pub struct Folklore {
    cfg: TickConfig,
    items: ItemStore,
    by_offset: BTreeMap<u64, ItemId>,
    diag: DiagStats,
    /// Full left-compaction fallbacks taken when no window qualified.
    pub fallbacks: u64,
}

impl Folklore {
    pub fn new(cfg: TickConfig) -> Self {
        Self { cfg, items: ItemStore::new(), by_offset: BTreeMap::new(), diag: DiagStats::default(), fallbacks: 0 }
    }

    fn size_of(&self, id: ItemId) -> u64 {
        self.items.true_size(id)
    }

    fn max_end(&self) -> u64 {
        self.by_offset
            .iter()
            .next_back()
            .map(|(&off, &id)| off + self.size_of(id))
            .unwrap_or(0)
    }

    /// Leftmost window of size `w` with at least `k` free space, or None.
    /// Windows are [j·w, min((j+1)·w, memory)); the tail window counts.
    fn find_window(&self, w: u64, k: u64) -> Option<u64> {
        let mem = self.cfg.memory_ticks();
        let win_len = |j: u64| ((j + 1) * w).min(mem) - j * w;
        let mut j = 0u64;
        let mut occ = 0u64;
        for (&off, &id) in &self.by_offset {
            let end = off + self.size_of(id);
            // finalize windows that end at or before this item's start
            while (j + 1) * w <= off {
                if win_len(j) - occ >= k {
                    return Some(j);
                }
                occ = 0;
                let jnext = off / w;
                if j + 1 < jnext {
                    // window j+1 is fully empty; full windows satisfy w ≥ k
                    if win_len(j + 1) >= k {
                        return Some(j + 1);
                    }
                    j = jnext;
                } else {
                    j += 1;
                }
            }
            // accumulate this item's overlap, finalizing windows it crosses
            let mut cursor = off;
            loop {
                let wend = ((j + 1) * w).min(mem);
                occ += end.min(wend) - cursor;
                if end > wend {
                    if win_len(j) - occ >= k {
                        return Some(j);
                    }
                    occ = 0;
                    cursor = wend;
                    j += 1;
                } else {
                    break;
                }
            }
        }
        loop {
            if j * w >= mem {
                return None;
            }
            if win_len(j) - occ >= k {
                return Some(j);
            }
            occ = 0;
            j += 1;
        }
    }

    fn move_item(&mut self, id: ItemId, from: u64, to: u64, out: &mut Moves) {
        if from == to {
            return;
        }
        let removed = self.by_offset.remove(&from);
        debug_assert_eq!(removed, Some(id));
        self.by_offset.insert(to, id);
        out.push(self, id, from, to);
    }

    /// Make `k` contiguous ticks available inside window j and return the
    /// placement offset. If some gap in the window already fits `k`, the
    /// leftmost such gap is used with zero moves; otherwise the movable items
    /// are compacted against the window's left edge.
    fn compact_window(&mut self, j: u64, w: u64, k: u64, out: &mut Moves) -> (u64, u64) {
        let mem = self.cfg.memory_ticks();
        let wstart = j * w;
        let wend = ((j + 1) * w).min(mem);
        let mut pack = wstart;
        let mut cap = wend;
        let mut movable: Vec<(u64, ItemId)> = Vec::new();
        // one item may straddle each boundary
        if let Some((&off, &id)) = self.by_offset.range(..wstart).next_back() {
            let end = off + self.size_of(id);
            if end > wstart {
                pack = end.min(wend);
            }
        }
        for (&off, &id) in self.by_offset.range(wstart..wend) {
            let end = off + self.size_of(id);
            if end > wend {
                cap = off; // right straddler blocks the tail
            } else {
                movable.push((off, id));
            }
        }
        // leftmost pre-existing gap of size ≥ k wins without any moves
        let mut cursor = pack;
        for &(off, id) in &movable {
            if off - cursor >= k {
                return (cursor, off);
            }
            cursor = off + self.size_of(id);
        }
        if cap - cursor >= k {
            return (cursor, cap);
        }
        for (off, id) in movable {
            let size = self.size_of(id);
            self.move_item(id, off, pack, out);
            pack += size;
        }
        (pack, cap)
    }

    /// Close rightmost gaps until the resizable window holds again.
    fn restore_resizable(&mut self, out: &mut Moves) {
        let allowed = self.items.total_true() + self.cfg.epsilon_ticks;
        while self.max_end() > allowed {
            // find the rightmost gap: walk backwards until prev_end < off
            let mut gap: Option<(u64, u64)> = None; // (gap_start, gap_len)
            let mut successor_end = None::<u64>;
            let mut iter = self.by_offset.iter().rev();
            let mut cur = iter.next();
            while let Some((&off, &_id)) = cur {
                let prev = iter.next();
                let gap_start = match prev {
                    Some((&poff, &pid)) => poff + self.size_of(pid),
                    None => 0,
                };
                if gap_start < off {
                    gap = Some((gap_start, off - gap_start));
                    successor_end = Some(off);
                    break;
                }
                cur = prev;
            }
            let Some((_, gap_len)) = gap else { break };
            let from = successor_end.unwrap();
            // shift the whole suffix right of the gap left by gap_len
            let suffix: Vec<(u64, ItemId)> = self.by_offset.range(from..).map(|(&o, &i)| (o, i)).collect();
            for (off, id) in suffix {
                self.move_item(id, off, off - gap_len, out);
            }
        }
    }

    fn insert(&mut self, id: ItemId, size: u64, out: &mut Moves) -> Result<u64, AllocError> {
        let limit = self.cfg.load_limit();
        if self.items.total_true() + size > limit {
            return Err(AllocError::LoadExceeded { present: self.items.total_true(), incoming: size, limit });
        }
        self.items.insert(id, size).map_err(|_| AllocError::DuplicateItem(id))?;
        let w = mul_div_ceil(2 * size, self.cfg.memory_ticks(), self.cfg.epsilon_ticks).min(self.cfg.memory_ticks());
        let placed = match self.find_window(w, size) {
            Some(j) => {
                let (gap_start, gap_end) = self.compact_window(j, w, size, out);
                if gap_end - gap_start < size {
                    return Err(AllocError::Invariant(format!(
                        "window {j} promised {size} free but compaction yields [{gap_start}, {gap_end})"
                    )));
                }
                gap_start
            }
            None => {
                // pigeonhole guarantees a window exists; keep a full
                // left-compaction as a safety net and count it
                self.fallbacks += 1;
                let all: Vec<(u64, ItemId)> = self.by_offset.iter().map(|(&o, &i)| (o, i)).collect();
                let mut pack = 0u64;
                for (off, iid) in all {
                    let sz = self.size_of(iid);
                    self.move_item(iid, off, pack, out);
                    pack += sz;
                }
                pack
            }
        };
        self.by_offset.insert(placed, id);
        out.push_placement(id, placed);
        self.restore_resizable(out);
        Ok(placed)
    }

    fn delete(&mut self, id: ItemId, out: &mut Moves) -> Result<(), AllocError> {
        let rec = self.items.get(id).ok_or(AllocError::UnknownItem(id))?;
        let off = self
            .by_offset
            .iter()
            .find(|(_, &i)| i == id)
            .map(|(&o, _)| o)
            .ok_or(AllocError::UnknownItem(id))?;
        let _ = rec;
        self.by_offset.remove(&off);
        self.items.remove(id).unwrap();
        self.restore_resizable(out);
        Ok(())
    }
}

/// Move accumulator: records per-item final displacement and charges mass for
/// every relocated item except the one named by the update itself.
struct Moves {
    event_id: ItemId,
    record: bool,
    moved_mass: u64,
    first_from: BTreeMap<ItemId, u64>,
    moves: Vec<MoveRecord>,
    placed_at: Option<u64>,
}

impl Moves {
    fn new(event_id: ItemId, record: bool) -> Self {
        Self { event_id, record, moved_mass: 0, first_from: BTreeMap::new(), moves: Vec::new(), placed_at: None }
    }

    fn push(&mut self, alloc: &Folklore, id: ItemId, from: u64, to: u64) {
        if id != self.event_id && !self.first_from.contains_key(&id) {
            self.moved_mass += alloc.items.true_size(id);
        }
        self.first_from.entry(id).or_insert(from);
        if self.record {
            self.moves.push(MoveRecord { id, from_ticks: from, to_ticks: to });
        }
    }

    fn push_placement(&mut self, id: ItemId, at: u64) {
        self.placed_at = Some(at);
        if self.record {
            self.moves.push(MoveRecord { id, from_ticks: at, to_ticks: at });
        }
    }

    fn into_outcome(self) -> UpdateOutcome {
        UpdateOutcome { moved_mass: self.moved_mass, moves: self.moves, placed_at: self.placed_at, rebuild: false }
    }
}

impl Allocator for Folklore {
    fn name(&self) -> &'static str {
        "folklore"
    }

    fn config(&self) -> &TickConfig {
        &self.cfg
    }

    fn apply(&mut self, event: &UpdateEvent, record_moves: bool) -> Result<UpdateOutcome, AllocError> {
        let mut out = Moves::new(event.id(), record_moves);
        match *event {
            UpdateEvent::Insert { id, size_ticks } => {
                self.insert(id, size_ticks, &mut out)?;
            }
            UpdateEvent::Delete { id } => self.delete(id, &mut out)?,
        }
        Ok(out.into_outcome())
    }

    fn scan_layout(&self, f: &mut dyn FnMut(ItemId, u64, u64)) {
        for (&off, &id) in &self.by_offset {
            f(id, off, self.size_of(id));
        }
    }

    fn present_mass(&self) -> u64 {
        self.items.total_true()
    }

    fn diag(&self) -> DiagStats {
        self.diag
    }
}
