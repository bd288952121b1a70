//! Per-agent event log.
//!
//! Every agent appends [`TraceEvent`]s (what happened to which guard) and
//! [`WireRecord`]s (what left the agent) to one log with a shared sequence
//! counter, so the per-agent order of everything is total. Timestamps come
//! from a process-wide strictly increasing clock, which makes cross-agent
//! ordering checks exact for in-process clusters.

use crate::wire::{AgentId, GuardRef};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Issue,
    Dispatch,
    ExecStart,
    ExecEnd,
    WriteResult,
    Release,
    WaitBegin,
    WaitEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub agent: AgentId,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<GuardRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<u8>,
    /// The other agent involved: destination of an issue, source of a
    /// dispatch or release.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peer: Option<AgentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<u64>,
    /// Names local computations and local activities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub t_ns: u64,
}

impl TraceEvent {
    pub fn new(kind: EventKind) -> Self {
        TraceEvent {
            seq: 0,
            agent: AgentId(0),
            kind,
            guard: None,
            object: None,
            method: None,
            tag: None,
            peer: None,
            window: None,
            label: None,
            t_ns: 0,
        }
    }
}

/// One instruction as it left its source agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRecord {
    pub seq: u64,
    pub src: AgentId,
    pub dst: AgentId,
    pub tag: u8,
    /// Frame size on the wire, length prefix included.
    pub bytes: u64,
    /// Length of the instruction's data blob (CopyBlock/WriteResult), else 0.
    pub payload_len: u64,
    /// Guard of the operation this message belongs to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<GuardRef>,
    /// Target object, for instructions addressed to an object.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<u64>,
    /// Hex SHA-256 of the data blob (CopyBlock/WriteResult).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    pub t_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceRecord {
    Event(TraceEvent),
    Wire(WireRecord),
}

impl TraceRecord {
    pub fn seq(&self) -> u64 {
        match self {
            TraceRecord::Event(e) => e.seq,
            TraceRecord::Wire(w) => w.seq,
        }
    }

    pub fn agent(&self) -> AgentId {
        match self {
            TraceRecord::Event(e) => e.agent,
            TraceRecord::Wire(w) => w.src,
        }
    }

    pub fn t_ns(&self) -> u64 {
        match self {
            TraceRecord::Event(e) => e.t_ns,
            TraceRecord::Wire(w) => w.t_ns,
        }
    }
}

/// Strictly increasing nanosecond clock shared by every agent in the
/// process, anchored at wall-clock time on first use.
pub fn now_ns() -> u64 {
    static BASE: OnceLock<(Instant, u64)> = OnceLock::new();
    static LAST: AtomicU64 = AtomicU64::new(0);
    let (start, wall) = *BASE.get_or_init(|| {
        let wall = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos() as u64).unwrap_or(0);
        (Instant::now(), wall)
    });
    let t = wall + start.elapsed().as_nanos() as u64;
    let mut last = LAST.load(Ordering::Relaxed);
    loop {
        let next = t.max(last + 1);
        match LAST.compare_exchange_weak(last, next, Ordering::AcqRel, Ordering::Relaxed) {
            Ok(_) => return next,
            Err(actual) => last = actual,
        }
    }
}

pub struct TraceLog {
    agent: AgentId,
    enabled: bool,
    inner: Mutex<LogInner>,
}

struct LogInner {
    next_seq: u64,
    records: Vec<TraceRecord>,
}

impl TraceLog {
    pub fn new(agent: AgentId, enabled: bool) -> Self {
        TraceLog { agent, enabled, inner: Mutex::new(LogInner { next_seq: 0, records: Vec::new() }) }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn event(&self, mut event: TraceEvent) {
        if !self.enabled {
            return;
        }
        let mut inner = self.inner.lock();
        event.seq = inner.next_seq;
        event.agent = self.agent;
        event.t_ns = now_ns();
        inner.next_seq += 1;
        inner.records.push(TraceRecord::Event(event));
    }

    pub fn wire(&self, mut record: WireRecord) {
        if !self.enabled {
            return;
        }
        let mut inner = self.inner.lock();
        record.seq = inner.next_seq;
        record.src = self.agent;
        record.t_ns = now_ns();
        inner.next_seq += 1;
        inner.records.push(TraceRecord::Wire(record));
    }

    pub fn snapshot(&self) -> Vec<TraceRecord> {
        self.inner.lock().records.clone()
    }

    pub fn take(&self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.inner.lock().records)
    }
}

/// Serializes records as JSON lines.
pub fn to_json_lines(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clock_is_strictly_increasing() {
        let mut last = now_ns();
        for _ in 0..10_000 {
            let t = now_ns();
            assert!(t > last);
            last = t;
        }
    }

    #[test]
    fn events_and_wire_share_one_sequence() {
        let log = TraceLog::new(AgentId(4), true);
        log.event(TraceEvent::new(EventKind::Issue));
        log.wire(WireRecord {
            seq: 99,
            src: AgentId(0),
            dst: AgentId(2),
            tag: 2,
            bytes: 10,
            payload_len: 0,
            guard: None,
            object: None,
            window: None,
            digest: None,
            t_ns: 0,
        });
        log.event(TraceEvent::new(EventKind::Release));
        let recs = log.snapshot();
        assert_eq!(recs.iter().map(TraceRecord::seq).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(recs.iter().all(|r| r.agent() == AgentId(4)));
        let text = to_json_lines(&recs);
        let back: Vec<TraceRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(back, recs);
    }

    #[test]
    fn disabled_log_records_nothing() {
        let log = TraceLog::new(AgentId(1), false);
        log.event(TraceEvent::new(EventKind::Issue));
        assert!(log.snapshot().is_empty());
    }
}
