//! Update stream events.

use crate::item::ItemId;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UpdateEvent {
    Insert { id: ItemId, size_ticks: u64 },
    Delete { id: ItemId },
}

impl UpdateEvent {
    pub fn id(&self) -> ItemId {
        match *self {
            UpdateEvent::Insert { id, .. } | UpdateEvent::Delete { id } => id,
        }
    }

    pub fn is_insert(&self) -> bool {
        matches!(self, UpdateEvent::Insert { .. })
    }
}
