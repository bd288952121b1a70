use super::Trace;
use crate::wire::AgentId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub messages: u64,
    pub bytes: u64,
}

/// Messages and bytes per ordered `(src, dst)` pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrafficMatrix {
    pub cells: BTreeMap<(AgentId, AgentId), Cell>,
}

impl TrafficMatrix {
    pub fn get(&self, src: AgentId, dst: AgentId) -> Cell {
        self.cells.get(&(src, dst)).copied().unwrap_or_default()
    }

    /// Per-agent totals of what it sent.
    pub fn sent(&self) -> BTreeMap<AgentId, Cell> {
        let mut out: BTreeMap<AgentId, Cell> = BTreeMap::new();
        for (&(src, _), c) in &self.cells {
            let e = out.entry(src).or_default();
            e.messages += c.messages;
            e.bytes += c.bytes;
        }
        out
    }

    /// Per-agent totals of what it received.
    pub fn received(&self) -> BTreeMap<AgentId, Cell> {
        let mut out: BTreeMap<AgentId, Cell> = BTreeMap::new();
        for (&(_, dst), c) in &self.cells {
            let e = out.entry(dst).or_default();
            e.messages += c.messages;
            e.bytes += c.bytes;
        }
        out
    }

    pub fn total_messages(&self) -> u64 {
        self.cells.values().map(|c| c.messages).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.cells.values().map(|c| c.bytes).sum()
    }
}

pub fn traffic_matrix(trace: &Trace) -> TrafficMatrix {
    let mut m = TrafficMatrix::default();
    for w in trace.wires() {
        let c = m.cells.entry((w.src, w.dst)).or_default();
        c.messages += 1;
        c.bytes += w.bytes;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_trace_gives_zero_matrix() {
        let m = traffic_matrix(&Trace::default());
        assert_eq!(m.total_messages(), 0);
        assert!(m.cells.is_empty());
        assert_eq!(m.get(AgentId(1), AgentId(2)), Cell::default());
    }
}
