//! The uniform allocator contract. Every allocator in this crate implements
//! `Allocator`, which is what makes differential testing and the shared
//! experiment harness possible.

use crate::event::UpdateEvent;
use crate::item::ItemId;
use crate::layout::MoveRecord;
use crate::tick::TickConfig;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AllocError {
    UnknownItem(ItemId),
    DuplicateItem(ItemId),
    SizeOutOfRegime { size: u64, lo: u64, hi: u64 },
    LoadExceeded { present: u64, incoming: u64, limit: u64 },
    /// An internal runtime check failed. Any trigger is a bug in the
    /// allocator, never a property of the input.
    Invariant(String),
}

impl std::fmt::Display for AllocError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AllocError::UnknownItem(id) => write!(f, "unknown item {id}"),
            AllocError::DuplicateItem(id) => write!(f, "duplicate item {id}"),
            AllocError::SizeOutOfRegime { size, lo, hi } => {
                write!(f, "size {size} outside regime [{lo}, {hi}]")
            }
            AllocError::LoadExceeded { present, incoming, limit } => {
                write!(f, "load constraint violated: {present} + {incoming} > {limit}")
            }
            AllocError::Invariant(msg) => write!(f, "internal invariant violated: {msg}"),
        }
    }
}

impl std::error::Error for AllocError {}

/// What one update did. `moves` is filled only when the caller asked for
/// move recording (trace emission); `moved_mass` is always exact and never
/// counts the updated item itself.
#[derive(Clone, Debug, Default)]
pub struct UpdateOutcome {
    pub moved_mass: u64,
    pub moves: Vec<MoveRecord>,
    /// Offset the inserted item was placed at (inserts only).
    pub placed_at: Option<u64>,
    /// True when this update triggered a rebuild / recovery step.
    pub rebuild: bool,
}

/// Diagnostic counters shared across allocators; fields an allocator does
/// not use stay zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct DiagStats {
    pub rebuilds: u64,
    /// Largest inflation/swap gap mass ever present, in ticks.
    pub max_waste_ticks: u64,
    /// Compatibility probes (rsum) / windows scanned (folklore).
    pub probes: u64,
    pub probe_events: u64,
    pub invalidations: u64,
    /// Soft-assert trigger count (block's merge stream check).
    pub soft_asserts: u64,
}

pub trait Allocator {
    fn name(&self) -> &'static str;

    fn config(&self) -> &TickConfig;

    /// Handle one update. `record_moves` asks for an explicit move list.
    fn apply(&mut self, event: &UpdateEvent, record_moves: bool) -> Result<UpdateOutcome, AllocError>;

    /// Visit every placed item in position order as (id, offset, logical size).
    fn scan_layout(&self, f: &mut dyn FnMut(ItemId, u64, u64));

    /// Σ true sizes of present items.
    fn present_mass(&self) -> u64;

    fn diag(&self) -> DiagStats;
}

/// Materialize a full `Layout` from an allocator's scan (test/replay helper).
pub fn layout_of(alloc: &dyn Allocator) -> crate::layout::Layout {
    let mut layout = crate::layout::Layout::new();
    alloc.scan_layout(&mut |id, off, _| {
        layout.placements.insert(id, off);
    });
    layout
}

/// Before/after offset diff for allocators whose layouts are derived from an
/// item order. Charges the true mass of every item whose offset changed,
/// excluding the updated item itself, and emits move records on demand.
pub struct DiffTracker {
    before: std::collections::BTreeMap<ItemId, u64>,
}

impl DiffTracker {
    pub fn capture(scan: impl FnMut(&mut dyn FnMut(ItemId, u64))) -> Self {
        let mut scan = scan;
        let mut before = std::collections::BTreeMap::new();
        scan(&mut |id, off| {
            before.insert(id, off);
        });
        Self { before }
    }

    /// Compare against the post-update offsets. `true_size` resolves mass for
    /// charged items; the inserted item (absent in `before`) is reported via
    /// a `from == to` record and never charged.
    pub fn finish(
        self,
        event_id: ItemId,
        record_moves: bool,
        scan: impl FnMut(&mut dyn FnMut(ItemId, u64)),
        true_size: impl Fn(ItemId) -> u64,
    ) -> (u64, Vec<MoveRecord>, Option<u64>) {
        let mut scan = scan;
        let mut moved_mass = 0u64;
        let mut moves = Vec::new();
        let mut placed_at = None;
        let before = self.before;
        scan(&mut |id, off| {
            match before.get(&id) {
                Some(&old) => {
                    if old != off {
                        if id != event_id {
                            moved_mass += true_size(id);
                        }
                        if record_moves {
                            moves.push(MoveRecord { id, from_ticks: old, to_ticks: off });
                        }
                    }
                }
                None => {
                    // newly placed item
                    if id == event_id {
                        placed_at = Some(off);
                        if record_moves {
                            moves.push(MoveRecord { id, from_ticks: off, to_ticks: off });
                        }
                    }
                }
            }
        });
        (moved_mass, moves, placed_at)
    }
}
