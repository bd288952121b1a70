use super::{detect_broadcast, traffic_matrix, BroadcastGroup, Trace};
use crate::wire::{tag_name, AgentId};
use serde::{Deserialize, Serialize};
use std::fmt::Write;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub src: AgentId,
    pub dst: AgentId,
    pub messages: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTotal {
    pub agent: AgentId,
    pub messages: u64,
    pub bytes: u64,
}

/// Machine-readable analysis result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub agents: Vec<AgentId>,
    pub events: usize,
    pub wire_records: usize,
    pub total_messages: u64,
    pub total_bytes: u64,
    pub matrix: Vec<MatrixEntry>,
    pub sent: Vec<AgentTotal>,
    pub received: Vec<AgentTotal>,
    pub min_fanout: usize,
    pub broadcast_groups: Vec<BroadcastGroup>,
    pub bytes_saved_total: u64,
}

pub fn summarize(trace: &Trace, min_fanout: usize) -> Summary {
    let m = traffic_matrix(trace);
    let groups = detect_broadcast(trace, min_fanout);
    let totals = |map: std::collections::BTreeMap<AgentId, super::Cell>| {
        map.into_iter().map(|(agent, c)| AgentTotal { agent, messages: c.messages, bytes: c.bytes }).collect()
    };
    Summary {
        agents: trace.agents(),
        events: trace.events().count(),
        wire_records: trace.wires().count(),
        total_messages: m.total_messages(),
        total_bytes: m.total_bytes(),
        matrix: m
            .cells
            .iter()
            .map(|(&(src, dst), c)| MatrixEntry { src, dst, messages: c.messages, bytes: c.bytes })
            .collect(),
        sent: totals(m.sent()),
        received: totals(m.received()),
        min_fanout,
        bytes_saved_total: groups.iter().map(|g| g.bytes_saved).sum(),
        broadcast_groups: groups,
    }
}

pub fn render_text(s: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "agents: {}", s.agents.len());
    let _ = writeln!(out, "events: {}  wire records: {}", s.events, s.wire_records);
    let _ = writeln!(out, "total messages: {}  total bytes: {}", s.total_messages, s.total_bytes);
    let _ = writeln!(out, "traffic matrix (src -> dst: messages / bytes):");
    for e in &s.matrix {
        let _ = writeln!(out, "  {:>3} -> {:>3}: {:>8} / {:>12}", e.src.0, e.dst.0, e.messages, e.bytes);
    }
    let _ = writeln!(out, "broadcast groups (min fanout {}): {}", s.min_fanout, s.broadcast_groups.len());
    for g in &s.broadcast_groups {
        let _ = writeln!(
            out,
            "  source {} window {} {}: fanout {} count {} payload {} B digest {}.. bytes saved {}",
            g.source.0,
            g.window,
            tag_name(g.tag),
            g.fanout(),
            g.count,
            g.payload_len,
            &g.digest[..g.digest.len().min(16)],
            g.bytes_saved
        );
    }
    let _ = writeln!(out, "bytes saved by aggregation: {}", s.bytes_saved_total);
    out
}
