//! Items and the per-allocator item table.
//!
//! An item has an immutable true size and a logical size that only grows
//! between rebuilds (inflation) and is reset back to the true size by
//! rebuild/recovery steps. Layout queries always see the logical size.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u64);

impl std::fmt::Display for ItemId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ItemRec {
    pub true_size: u64,
    pub logical_size: u64,
}

/// Dense id-indexed store. Workload generators assign ids monotonically, so a
/// Vec with tombstones is both faster and iteration-order deterministic.
#[derive(Clone, Debug, Default)]
pub struct ItemStore {
    slots: Vec<Option<ItemRec>>,
    present: usize,
    total_true: u64,
    total_logical: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ItemError {
    Duplicate(ItemId),
    Unknown(ItemId),
    ZeroSize(ItemId),
}

impl std::fmt::Display for ItemError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ItemError::Duplicate(id) => write!(f, "duplicate item {id}"),
            ItemError::Unknown(id) => write!(f, "unknown item {id}"),
            ItemError::ZeroSize(id) => write!(f, "item {id} has zero size"),
        }
    }
}

impl std::error::Error for ItemError {}

impl ItemStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: ItemId, true_size: u64) -> Result<(), ItemError> {
        if true_size == 0 {
            return Err(ItemError::ZeroSize(id));
        }
        let idx = id.0 as usize;
        if idx >= self.slots.len() {
            self.slots.resize(idx + 1, None);
        }
        if self.slots[idx].is_some() {
            return Err(ItemError::Duplicate(id));
        }
        self.slots[idx] = Some(ItemRec { true_size, logical_size: true_size });
        self.present += 1;
        self.total_true += true_size;
        self.total_logical += true_size;
        Ok(())
    }

    pub fn remove(&mut self, id: ItemId) -> Result<ItemRec, ItemError> {
        let rec = self
            .slots
            .get_mut(id.0 as usize)
            .and_then(Option::take)
            .ok_or(ItemError::Unknown(id))?;
        self.present -= 1;
        self.total_true -= rec.true_size;
        self.total_logical -= rec.logical_size;
        Ok(rec)
    }

    pub fn get(&self, id: ItemId) -> Option<ItemRec> {
        self.slots.get(id.0 as usize).copied().flatten()
    }

    pub fn contains(&self, id: ItemId) -> bool {
        self.get(id).is_some()
    }

    pub fn true_size(&self, id: ItemId) -> u64 {
        self.get(id).expect("item present").true_size
    }

    pub fn logical_size(&self, id: ItemId) -> u64 {
        self.get(id).expect("item present").logical_size
    }

    /// Inflation only grows the logical size; rebuilds call `reset_logical`.
    pub fn inflate(&mut self, id: ItemId, new_logical: u64) -> Result<(), ItemError> {
        let rec = self
            .slots
            .get_mut(id.0 as usize)
            .and_then(Option::as_mut)
            .ok_or(ItemError::Unknown(id))?;
        debug_assert!(new_logical >= rec.logical_size, "inflation only grows size");
        self.total_logical += new_logical - rec.logical_size;
        rec.logical_size = new_logical;
        Ok(())
    }

    pub fn reset_logical(&mut self, id: ItemId) {
        if let Some(rec) = self.slots.get_mut(id.0 as usize).and_then(Option::as_mut) {
            self.total_logical -= rec.logical_size - rec.true_size;
            rec.logical_size = rec.true_size;
        }
    }

    pub fn reset_all_logical(&mut self) {
        for slot in self.slots.iter_mut().flatten() {
            slot.logical_size = slot.true_size;
        }
        self.total_logical = self.total_true;
    }

    pub fn len(&self) -> usize {
        self.present
    }

    pub fn is_empty(&self) -> bool {
        self.present == 0
    }

    /// Σ true sizes of present items (the L in the resizable window).
    pub fn total_true(&self) -> u64 {
        self.total_true
    }

    pub fn total_logical(&self) -> u64 {
        self.total_logical
    }

    /// Total inflation gap mass, Σ (logical − true).
    pub fn gap_mass(&self) -> u64 {
        self.total_logical - self.total_true
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemId, ItemRec)> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|rec| (ItemId(i as u64), rec)))
    }
}
