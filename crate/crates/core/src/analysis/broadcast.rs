//! Detection of one-to-many sends of identical data.
//!
//! Candidates are `CopyBlock` and `WriteResult` messages. They are grouped
//! by source agent, scope window and payload digest; a group whose
//! destinations number at least `min_fanout` is a broadcast that a
//! collective could have delivered once.

use super::Trace;
use crate::wire::{AgentId, TAG_COPY_BLOCK, TAG_WRITE_RESULT};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// A receiving object (or result slot, for `WriteResult`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Destination {
    pub agent: AgentId,
    pub object: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BroadcastGroup {
    pub source: AgentId,
    pub window: u64,
    pub tag: u8,
    pub digest: String,
    pub payload_len: u64,
    pub destinations: Vec<Destination>,
    /// Number of instructions in the group.
    pub count: u64,
    /// Bytes a single aggregated send would have saved:
    /// `payload_len * (fanout - 1)`.
    pub bytes_saved: u64,
}

impl BroadcastGroup {
    pub fn fanout(&self) -> usize {
        self.destinations.len()
    }
}

pub fn detect_broadcast(trace: &Trace, min_fanout: usize) -> Vec<BroadcastGroup> {
    type Key = (AgentId, u64, u8, String, u64);
    let mut groups: BTreeMap<Key, (u64, BTreeSet<Destination>)> = BTreeMap::new();
    for w in trace.wires() {
        if w.tag != TAG_COPY_BLOCK && w.tag != TAG_WRITE_RESULT {
            continue;
        }
        let Some(digest) = &w.digest else { continue };
        let key = (w.src, w.window.unwrap_or(0), w.tag, digest.clone(), w.payload_len);
        let entry = groups.entry(key).or_default();
        entry.0 += 1;
        entry.1.insert(Destination { agent: w.dst, object: w.object.unwrap_or(0) });
    }
    groups
        .into_iter()
        .filter(|(_, (_, dests))| dests.len() >= min_fanout.max(2))
        .map(|((source, window, tag, digest, payload_len), (count, dests))| BroadcastGroup {
            source,
            window,
            tag,
            digest,
            payload_len,
            bytes_saved: payload_len * (dests.len() as u64 - 1),
            destinations: dests.into_iter().collect(),
            count,
        })
        .collect()
}
