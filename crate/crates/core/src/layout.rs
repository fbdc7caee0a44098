//! Layout: the injective placement of items into disjoint intervals, plus the
//! validity checker and the single mutation path (`apply_moves`).
//!
//! An item placed at offset `o` occupies `(o, o + logical_size)`. Validity is
//! pairwise disjointness of those intervals inside `[0, memory]`; the
//! resizable check additionally demands the rightmost occupied offset stay
//! within `L + ε` where `L` is the present true mass.

use crate::item::{ItemId, ItemStore};
use crate::tick::TickConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Layout {
    pub placements: BTreeMap<ItemId, u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveRecord {
    pub id: ItemId,
    pub from_ticks: u64,
    pub to_ticks: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidityReport {
    /// Pairs of items whose intervals intersect.
    pub overlaps: Vec<(ItemId, ItemId)>,
    /// Items whose interval leaves [0, memory].
    pub out_of_bounds: Vec<ItemId>,
    /// Set when the resizable window is violated: (max occupied end, allowed).
    pub resizable_violation: Option<(u64, u64)>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.overlaps.is_empty() && self.out_of_bounds.is_empty() && self.resizable_violation.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayoutError {
    UnknownItem(ItemId),
    NotPlaced(ItemId),
    OverlapAfterMove(ItemId, ItemId),
    OutOfBoundsAfterMove(ItemId),
}

impl std::fmt::Display for LayoutError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LayoutError::UnknownItem(id) => write!(f, "item {id} not in item table"),
            LayoutError::NotPlaced(id) => write!(f, "item {id} not placed"),
            LayoutError::OverlapAfterMove(a, b) => write!(f, "moves create overlap between {a} and {b}"),
            LayoutError::OutOfBoundsAfterMove(id) => write!(f, "moves push {id} out of bounds"),
        }
    }
}

impl std::error::Error for LayoutError {}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn offset_of(&self, id: ItemId) -> Option<u64> {
        self.placements.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.placements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placements.is_empty()
    }

    /// Stable content hash for replay equivalence checks.
    pub fn digest(&self) -> u64 {
        // FNV-1a over (id, offset) in key order.
        let mut h: u64 = 0xcbf29ce484222325;
        for (id, off) in &self.placements {
            for w in [id.0, *off] {
                for b in w.to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        }
        h
    }
}

/// Full validity check. `resizable` additionally enforces the `L + ε` window.
/// Unknown ids are a structural error, reported through `Err`.
pub fn validate_layout(
    layout: &Layout,
    items: &ItemStore,
    cfg: &TickConfig,
    resizable: bool,
) -> Result<ValidityReport, LayoutError> {
    let mut intervals: Vec<(u64, u64, ItemId)> = Vec::with_capacity(layout.len());
    for (&id, &off) in &layout.placements {
        let rec = items.get(id).ok_or(LayoutError::UnknownItem(id))?;
        intervals.push((off, off + rec.logical_size, id));
    }
    intervals.sort_unstable();

    let mut report = ValidityReport::default();
    let mem = cfg.memory_ticks();
    let mut max_end = 0u64;
    for (i, &(_start, end, id)) in intervals.iter().enumerate() {
        if end > mem {
            report.out_of_bounds.push(id);
        }
        max_end = max_end.max(end);
        if i + 1 < intervals.len() {
            let (next_start, _, next_id) = intervals[i + 1];
            if end > next_start {
                report.overlaps.push((id, next_id));
            }
        }
    }
    if resizable {
        let allowed = items.total_true().saturating_add(cfg.epsilon_ticks);
        if max_end > allowed {
            report.resizable_violation = Some((max_end, allowed));
        }
    }
    Ok(report)
}

/// Streaming validity check over a position-sorted scan, used by the
/// experiment harness after every update. `present_true_mass` comes from the
/// harness's own event accounting, independent of the allocator.
pub struct SortedScanCheck {
    mem: u64,
    eps: u64,
    resizable: bool,
    prev_end: u64,
    prev_off: u64,
    prev_id: Option<ItemId>,
    pub max_end: u64,
    pub count: usize,
    pub failure: Option<String>,
}

impl SortedScanCheck {
    pub fn new(cfg: &TickConfig, resizable: bool) -> Self {
        Self {
            mem: cfg.memory_ticks(),
            eps: cfg.epsilon_ticks,
            resizable,
            prev_end: 0,
            prev_off: 0,
            prev_id: None,
            max_end: 0,
            count: 0,
            failure: None,
        }
    }

    #[inline]
    pub fn push(&mut self, id: ItemId, offset: u64, logical: u64) {
        if self.failure.is_some() {
            return;
        }
        if let Some(prev) = self.prev_id {
            if offset < self.prev_off {
                self.failure = Some(format!("scan not position-sorted: {id} at {offset} after {prev} at {}", self.prev_off));
                return;
            }
            if offset < self.prev_end {
                self.failure = Some(format!("overlap: {prev} ends at {} but {id} starts at {offset}", self.prev_end));
                return;
            }
        }
        let end = offset + logical;
        if end > self.mem {
            self.failure = Some(format!("out of bounds: {id} ends at {end} > memory {}", self.mem));
            return;
        }
        self.prev_id = Some(id);
        self.prev_off = offset;
        self.prev_end = end;
        self.max_end = self.max_end.max(end);
        self.count += 1;
    }

    pub fn finish(self, present_true_mass: u64) -> Result<(), String> {
        if let Some(f) = self.failure {
            return Err(f);
        }
        if self.resizable {
            let allowed = present_true_mass.saturating_add(self.eps);
            if self.max_end > allowed {
                return Err(format!(
                    "resizable window violated: max end {} > L + eps = {}",
                    self.max_end, allowed
                ));
            }
        }
        Ok(())
    }
}

/// Apply a batch of moves, validating the post-state before committing.
/// The input layout is untouched on error.
pub fn apply_moves(
    layout: &Layout,
    items: &ItemStore,
    cfg: &TickConfig,
    moves: &[MoveRecord],
) -> Result<Layout, LayoutError> {
    let mut next = layout.clone();
    for mv in moves {
        if !items.contains(mv.id) {
            return Err(LayoutError::UnknownItem(mv.id));
        }
        next.placements.insert(mv.id, mv.to_ticks);
    }
    let report = validate_layout(&next, items, cfg, false)?;
    if let Some(&(a, b)) = report.overlaps.first() {
        return Err(LayoutError::OverlapAfterMove(a, b));
    }
    if let Some(&id) = report.out_of_bounds.first() {
        return Err(LayoutError::OutOfBoundsAfterMove(id));
    }
    Ok(next)
}
