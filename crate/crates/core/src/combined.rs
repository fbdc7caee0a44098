//! Resizable allocator for arbitrary item sizes: large items (> ε⁴) go to
//! the leveled allocator occupying [0, L₁ + ε/2); tiny items go to the
//! relocatable wrapper anchored at Δ = L₁ + ε/2. Every large update of size
//! k shifts the wrapper's region start by k via an external update, so the
//! two regions stay flush and the whole layout fits [0, L₁ + L₂ + ε].
//!
//! The leveled side runs with ε/4 rather than the ε/2 slack it is granted:
//! its construction needs ε⁻¹ to be a power of 4, and the tighter window is
//! contained in the granted one.

use crate::alloc::{AllocError, Allocator, DiagStats, UpdateOutcome};
use crate::event::UpdateEvent;
use crate::flex::{FlexHash, PushDir};
use crate::geo::Geo;
use crate::item::ItemId;
use crate::tick::{mul_div, TickConfig};

pub struct Combined {
    cfg: TickConfig,
    geo: Geo,
    flex: FlexHash,
    tiny_max: u64,
}

impl Combined {
    pub fn new(cfg: TickConfig, seed: u64) -> Result<Self, AllocError> {
        let k = cfg
            .epsilon_log4()
            .ok_or_else(|| AllocError::Invariant("combined requires epsilon = 4^-k".into()))?;
        let geo_cfg = TickConfig::pow4(cfg.resolution_log2, k + 1)
            .map_err(|e| AllocError::Invariant(e.to_string()))?;
        let geo = Geo::new(geo_cfg, seed ^ 0x67)?;
        let eps4 = {
            let e2 = mul_div(cfg.epsilon_ticks, cfg.epsilon_ticks, cfg.memory_ticks());
            mul_div(e2, e2, cfg.memory_ticks()).max(1)
        };
        let flex = FlexHash::new(cfg, cfg.epsilon_ticks / 2, eps4, cfg.epsilon_ticks / 2, seed ^ 0x66)?;
        Ok(Self { cfg, geo, flex, tiny_max: eps4 })
    }

    pub fn tiny_max(&self) -> u64 {
        self.tiny_max
    }

    pub fn geo(&self) -> &Geo {
        &self.geo
    }

    pub fn flex(&self) -> &FlexHash {
        &self.flex
    }

    fn sync_regions(&self) -> Result<(), AllocError> {
        let want = self.geo.present_mass() + self.cfg.epsilon_ticks / 2;
        if self.flex.region_start() != want {
            return Err(AllocError::Invariant(format!(
                "flex region starts at {} instead of L1 + eps/2 = {want}",
                self.flex.region_start()
            )));
        }
        Ok(())
    }
}

impl Allocator for Combined {
    fn name(&self) -> &'static str {
        "combined"
    }

    fn config(&self) -> &TickConfig {
        &self.cfg
    }

    fn apply(&mut self, event: &UpdateEvent, record_moves: bool) -> Result<UpdateOutcome, AllocError> {
        let limit = self.cfg.load_limit();
        let present = self.present_mass();
        let out = match *event {
            UpdateEvent::Insert { id, size_ticks } if size_ticks <= self.tiny_max => {
                if present + size_ticks > limit {
                    return Err(AllocError::LoadExceeded { present, incoming: size_ticks, limit });
                }
                let (off, moved, moves) = self.flex.insert_tiny(id, size_ticks, record_moves)?;
                UpdateOutcome { moved_mass: moved, moves, placed_at: Some(off), rebuild: false }
            }
            UpdateEvent::Insert { id, size_ticks } => {
                if present + size_ticks > limit {
                    return Err(AllocError::LoadExceeded { present, incoming: size_ticks, limit });
                }
                let mut out = self.geo.apply(event, record_moves)?;
                let _ = id;
                let (moved, moves) = self.flex.external_update(size_ticks, PushDir::Right, record_moves)?;
                out.moved_mass += moved;
                out.moves.extend(moves);
                out
            }
            UpdateEvent::Delete { id } => {
                if self.flex.contains(id) {
                    let (moved, moves) = self.flex.delete_tiny(id, record_moves)?;
                    UpdateOutcome { moved_mass: moved, moves, placed_at: None, rebuild: false }
                } else {
                    let size = self.geo.true_size_of(id).ok_or(AllocError::UnknownItem(id))?;
                    let mut out = self.geo.apply(event, record_moves)?;
                    let (moved, moves) = self.flex.external_update(size, PushDir::Left, record_moves)?;
                    out.moved_mass += moved;
                    out.moves.extend(moves);
                    out
                }
            }
        };
        self.sync_regions()?;
        Ok(out)
    }

    fn scan_layout(&self, f: &mut dyn FnMut(ItemId, u64, u64)) {
        self.geo.scan_layout(f);
        self.flex.scan_physical(f);
    }

    fn present_mass(&self) -> u64 {
        self.geo.present_mass() + self.flex.present_mass()
    }

    fn diag(&self) -> DiagStats {
        let mut d = self.geo.diag();
        let fd = self.flex.diag();
        d.rebuilds += fd.rebuilds;
        d
    }
}
