//! Model-level simulator for contiguous memory reallocation.
//!
//! Memory is the interval [0, 1] at dyadic tick resolution; items of exact
//! tick sizes are inserted and deleted under a load-factor cap of 1 − ε, and
//! allocators rearrange items to keep placements valid (disjoint, in-bounds,
//! and within the resizable window [0, L + ε]). Every relocation is charged
//! by the true mass moved, per update.
//!
//! Six allocators share one contract: a pigeonhole baseline, a covering-set
//! allocator for sizes in [ε, 2ε), a leveled allocator for sizes in [ε⁵, 1],
//! a relocatable tiny-item wrapper plus its combination with the leveled
//! allocator, a subset-sum swapper for stochastic streams, and an aligned
//! mem-block allocator for small items. Workload generators, per-update cost
//! ledgers, invariant checkers, and Monte-Carlo oracles round out the lab.

pub mod alloc;
pub mod block;
pub mod combined;
pub mod cost;
pub mod event;
pub mod flex;
pub mod folklore;
pub mod geo;
pub mod item;
pub mod layout;
pub mod oracles;
pub mod rng;
pub mod rsum;
pub mod simple;
pub mod subset;
pub mod tick;
pub mod trace;
pub mod workload;

pub use alloc::{AllocError, Allocator, DiagStats, UpdateOutcome};
pub use cost::{amortized_metrics, CostLedger, Metrics};
pub use event::UpdateEvent;
pub use item::{ItemId, ItemRec, ItemStore};
pub use layout::{apply_moves, validate_layout, Layout, MoveRecord, SortedScanCheck, ValidityReport};
pub use rng::DetRng;
pub use tick::TickConfig;
