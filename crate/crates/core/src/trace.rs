//! JSONL trace format: one header object, then one record per update.
//!
//! Inserts appear in `moves` with `from_ticks == to_ticks` (their placement);
//! `moved_mass_ticks` never counts the updated item itself. Replaying a trace
//! through `apply_moves` reproduces the final layout bit-exactly.

use crate::event::UpdateEvent;
use crate::item::{ItemId, ItemStore};
use crate::layout::{apply_moves, Layout, MoveRecord};
use crate::tick::TickConfig;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

pub const TRACE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: u32,
    pub resolution_log2: u32,
    pub epsilon_ticks: u64,
    pub allocator: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub event: UpdateEvent,
    pub moves: Vec<MoveRecord>,
    pub moved_mass_ticks: u64,
    pub allocator: String,
}

#[derive(Debug)]
pub enum TraceError {
    Io(std::io::Error),
    Json(serde_json::Error),
    MissingHeader,
    Replay(String),
}

impl std::fmt::Display for TraceError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TraceError::Io(e) => write!(f, "trace io: {e}"),
            TraceError::Json(e) => write!(f, "trace json: {e}"),
            TraceError::MissingHeader => write!(f, "trace has no header line"),
            TraceError::Replay(msg) => write!(f, "replay failed: {msg}"),
        }
    }
}

impl std::error::Error for TraceError {}

impl From<std::io::Error> for TraceError {
    fn from(e: std::io::Error) -> Self {
        TraceError::Io(e)
    }
}

impl From<serde_json::Error> for TraceError {
    fn from(e: serde_json::Error) -> Self {
        TraceError::Json(e)
    }
}

pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, header: &TraceHeader) -> Result<Self, TraceError> {
        serde_json::to_writer(&mut out, header)?;
        out.write_all(b"\n")?;
        Ok(Self { out })
    }

    pub fn record(&mut self, rec: &TraceRecord) -> Result<(), TraceError> {
        serde_json::to_writer(&mut self.out, rec)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn read_trace<R: BufRead>(reader: R) -> Result<(TraceHeader, Vec<TraceRecord>), TraceError> {
    let mut lines = reader.lines();
    let header_line = lines.next().ok_or(TraceError::MissingHeader)??;
    let header: TraceHeader = serde_json::from_str(&header_line)?;
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok((header, records))
}

/// Outcome of replaying a trace through the core mutation path.
pub struct ReplayResult {
    pub layout: Layout,
    pub items: ItemStore,
    pub final_digest: u64,
    pub steps: u64,
}

/// Replay records through `apply_moves`, reconstructing and validating the
/// layout step by step. Logical inflation is invisible to traces, so replay
/// validates with true sizes only (a conservative subset of disjointness).
pub fn replay(header: &TraceHeader, records: &[TraceRecord]) -> Result<ReplayResult, TraceError> {
    let cfg = TickConfig::new(header.resolution_log2, header.epsilon_ticks)
        .map_err(|e| TraceError::Replay(e.to_string()))?;
    let mut layout = Layout::new();
    let mut items = ItemStore::new();
    for rec in records {
        match rec.event {
            UpdateEvent::Insert { id, size_ticks } => {
                items.insert(id, size_ticks).map_err(|e| TraceError::Replay(e.to_string()))?;
            }
            UpdateEvent::Delete { id } => {
                items.remove(id).map_err(|e| TraceError::Replay(e.to_string()))?;
                layout.placements.remove(&id);
            }
        }
        layout = apply_moves(&layout, &items, &cfg, &rec.moves)
            .map_err(|e| TraceError::Replay(format!("step {}: {e}", rec.step)))?;
        // the updated item itself must never be charged; items touched more
        // than once in one update are charged once
        let self_id: ItemId = rec.event.id();
        let mut touched: Vec<ItemId> = rec.moves.iter().map(|m| m.id).filter(|&id| id != self_id).collect();
        touched.sort_unstable();
        touched.dedup();
        let charged: u64 = touched
            .iter()
            .map(|&id| items.get(id).map(|r| r.true_size).unwrap_or(0))
            .sum();
        if charged != rec.moved_mass_ticks {
            return Err(TraceError::Replay(format!(
                "step {}: moved_mass {} disagrees with recorded {}",
                rec.step, charged, rec.moved_mass_ticks
            )));
        }
    }
    let final_digest = layout.digest();
    Ok(ReplayResult { layout, items, final_digest, steps: records.len() as u64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_write_read() {
        let header = TraceHeader {
            format: TRACE_FORMAT_VERSION,
            resolution_log2: 40,
            epsilon_ticks: 1 << 36,
            allocator: "folklore".into(),
            seed: 42,
        };
        let rec = TraceRecord {
            step: 0,
            event: UpdateEvent::Insert { id: ItemId(0), size_ticks: 100 },
            moves: vec![MoveRecord { id: ItemId(0), from_ticks: 0, to_ticks: 0 }],
            moved_mass_ticks: 0,
            allocator: "folklore".into(),
        };
        let mut w = TraceWriter::new(Vec::new(), &header).unwrap();
        w.record(&rec).unwrap();
        let bytes = w.into_inner();
        let (h2, recs) = read_trace(std::io::Cursor::new(bytes)).unwrap();
        assert_eq!(h2, header);
        assert_eq!(recs, vec![rec]);
    }

    #[test]
    fn replay_applies_moves_and_checks_mass() {
        let header = TraceHeader {
            format: TRACE_FORMAT_VERSION,
            resolution_log2: 40,
            epsilon_ticks: 1 << 36,
            allocator: "x".into(),
            seed: 0,
        };
        let records = vec![
            TraceRecord {
                step: 0,
                event: UpdateEvent::Insert { id: ItemId(0), size_ticks: 100 },
                moves: vec![MoveRecord { id: ItemId(0), from_ticks: 0, to_ticks: 0 }],
                moved_mass_ticks: 0,
                allocator: "x".into(),
            },
            TraceRecord {
                step: 1,
                event: UpdateEvent::Insert { id: ItemId(1), size_ticks: 50 },
                moves: vec![
                    MoveRecord { id: ItemId(1), from_ticks: 100, to_ticks: 100 },
                    MoveRecord { id: ItemId(0), from_ticks: 0, to_ticks: 150 },
                ],
                moved_mass_ticks: 100,
                allocator: "x".into(),
            },
        ];
        let result = replay(&header, &records).unwrap();
        assert_eq!(result.layout.offset_of(ItemId(0)), Some(150));
        assert_eq!(result.layout.offset_of(ItemId(1)), Some(100));
        assert_eq!(result.steps, 2);

        // corrupt the recorded mass: replay must reject
        let mut bad = records;
        bad[1].moved_mass_ticks = 1;
        assert!(matches!(replay(&header, &bad), Err(TraceError::Replay(_))));
    }
}
