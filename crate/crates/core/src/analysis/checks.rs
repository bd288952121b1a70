//! Guard-protocol and ordering checks over raw trace records.
//!
//! Each check returns a list of violations; an empty list means the trace
//! satisfies the property.

use crate::runtime::trace::{EventKind, TraceEvent, TraceRecord, WireRecord};
use crate::wire::{AgentId, GuardRef, TAG_RELEASE_GUARD, TAG_WRITE_RESULT};
use std::collections::{BTreeMap, HashMap, VecDeque};

fn events(records: &[TraceRecord]) -> impl Iterator<Item = &TraceEvent> {
    records.iter().filter_map(|r| match r {
        TraceRecord::Event(e) => Some(e),
        TraceRecord::Wire(_) => None,
    })
}

fn wires(records: &[TraceRecord]) -> impl Iterator<Item = &WireRecord> {
    records.iter().filter_map(|r| match r {
        TraceRecord::Wire(w) => Some(w),
        TraceRecord::Event(_) => None,
    })
}

fn own(e: &TraceEvent, kind: EventKind) -> Option<GuardRef> {
    (e.kind == kind).then_some(e.guard).flatten().filter(|g| g.agent == e.agent)
}

fn fmt_guard(g: GuardRef) -> String {
    format!("{}:{}", g.agent.0, g.guard)
}

/// Every issued guard is released exactly once; nothing unissued is
/// released; every `wait_end` follows its release on the waiting agent;
/// on the wire, every `WriteResult` of a guard precedes its `ReleaseGuard`.
pub fn guard_protocol(records: &[TraceRecord]) -> Vec<String> {
    let mut out = Vec::new();
    let mut issued: HashMap<GuardRef, u32> = HashMap::new();
    let mut released: HashMap<GuardRef, (u32, u64)> = HashMap::new();
    for e in events(records) {
        if let Some(g) = own(e, EventKind::Issue) {
            *issued.entry(g).or_default() += 1;
        }
        if let Some(g) = own(e, EventKind::Release) {
            let r = released.entry(g).or_insert((0, e.seq));
            r.0 += 1;
            r.1 = r.1.min(e.seq);
        }
    }
    let mut issued_sorted: Vec<_> = issued.iter().collect();
    issued_sorted.sort();
    for (&g, &n) in issued_sorted {
        if n > 1 {
            out.push(format!("guard {} issued {n} times", fmt_guard(g)));
        }
        match released.get(&g).map(|r| r.0).unwrap_or(0) {
            1 => {}
            0 => out.push(format!("guard {} never released", fmt_guard(g))),
            k => out.push(format!("guard {} released {k} times", fmt_guard(g))),
        }
    }
    for g in released.keys() {
        if !issued.contains_key(g) {
            out.push(format!("guard {} released but never issued", fmt_guard(*g)));
        }
    }
    for e in events(records) {
        if let Some(g) = own(e, EventKind::WaitEnd) {
            match released.get(&g) {
                Some(&(_, seq)) if seq < e.seq => {}
                _ => out.push(format!("wait_end for {} at {} seq {} precedes its release", fmt_guard(g), e.agent, e.seq)),
            }
        }
    }
    // Wire order per (src, guard).
    let mut per: BTreeMap<(AgentId, GuardRef), Vec<(u64, u8)>> = BTreeMap::new();
    for w in wires(records) {
        if let Some(g) = w.guard {
            if w.tag == TAG_WRITE_RESULT || w.tag == TAG_RELEASE_GUARD {
                per.entry((w.src, g)).or_default().push((w.seq, w.tag));
            }
        }
    }
    for ((src, g), mut msgs) in per {
        msgs.sort();
        let releases: Vec<u64> = msgs.iter().filter(|m| m.1 == TAG_RELEASE_GUARD).map(|m| m.0).collect();
        if releases.len() > 1 {
            out.push(format!("{src} sent {} releases for {}", releases.len(), fmt_guard(g)));
        }
        if let Some(&first_release) = releases.first() {
            if msgs.iter().any(|m| m.1 == TAG_WRITE_RESULT && m.0 > first_release) {
                out.push(format!("{src} sent a write_result for {} after its release", fmt_guard(g)));
            }
        }
    }
    out
}

/// The executor's `exec_end` of a guard happens before the issuer records
/// its release. Relies on a shared clock, so it is meaningful for
/// single-process runs.
pub fn release_follows_exec_end(records: &[TraceRecord]) -> Vec<String> {
    let mut ends: HashMap<GuardRef, u64> = HashMap::new();
    for e in events(records) {
        if let (EventKind::ExecEnd, Some(g)) = (e.kind, e.guard) {
            ends.insert(g, e.t_ns);
        }
    }
    let mut out = Vec::new();
    for e in events(records) {
        if let Some(g) = own(e, EventKind::Release) {
            if let Some(&end) = ends.get(&g) {
                if end >= e.t_ns {
                    out.push(format!("release of {} recorded before its exec_end", fmt_guard(g)));
                }
            }
        }
    }
    out
}

/// Issue-to-release interval of every released guard, by issue time.
pub fn guard_intervals(records: &[TraceRecord]) -> Vec<(GuardRef, u64, u64)> {
    let mut start: HashMap<GuardRef, u64> = HashMap::new();
    let mut out = Vec::new();
    for e in events(records) {
        if let Some(g) = own(e, EventKind::Issue) {
            start.insert(g, e.t_ns);
        }
    }
    for e in events(records) {
        if let Some(g) = own(e, EventKind::Release) {
            if let Some(&s) = start.get(&g) {
                out.push((g, s, e.t_ns));
            }
        }
    }
    out.sort_by_key(|&(g, s, _)| (s, g));
    out
}

/// Sequential-mode check: at every instant the in-flight guards form a
/// single chain of nested operations (an operation may be in flight while
/// the method it invoked waits on one inner operation, never two unrelated
/// operations at once). Equivalently, issue-release intervals are
/// laminar: any two either nest or are disjoint.
pub fn single_chain_in_flight(records: &[TraceRecord]) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack: Vec<(GuardRef, u64)> = Vec::new();
    for (g, s, e) in guard_intervals(records) {
        while stack.last().is_some_and(|&(_, end)| end < s) {
            stack.pop();
        }
        if let Some(&(outer, outer_end)) = stack.last() {
            if e > outer_end {
                out.push(format!(
                    "guards {} and {} were in flight concurrently without nesting",
                    fmt_guard(outer),
                    fmt_guard(g)
                ));
            }
        }
        stack.push((g, e));
    }
    out
}

/// Largest number of simultaneously in-flight guards.
pub fn max_in_flight(records: &[TraceRecord]) -> usize {
    let mut points: Vec<(u64, i32)> = Vec::new();
    for (_, s, e) in guard_intervals(records) {
        points.push((s, 1));
        points.push((e, -1));
    }
    points.sort_by_key(|&(t, d)| (t, d));
    let (mut cur, mut best) = (0i32, 0i32);
    for (_, d) in points {
        cur += d;
        best = best.max(cur);
    }
    best as usize
}

/// A labelled local computation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Span {
    pub agent: AgentId,
    pub label: String,
    pub start: u64,
    pub end: u64,
}

impl Span {
    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Pairs labelled `exec_start`/`exec_end` events (those without a guard)
/// into spans, in start order.
pub fn label_spans(records: &[TraceRecord]) -> Vec<Span> {
    let mut open: HashMap<(AgentId, String), VecDeque<u64>> = HashMap::new();
    let mut out = Vec::new();
    let mut evs: Vec<&TraceEvent> = events(records).filter(|e| e.guard.is_none() && e.label.is_some()).collect();
    evs.sort_by_key(|e| e.t_ns);
    for e in evs {
        let key = (e.agent, e.label.clone().expect("filtered on label"));
        match e.kind {
            EventKind::ExecStart => open.entry(key).or_default().push_back(e.t_ns),
            EventKind::ExecEnd => {
                if let Some(start) = open.get_mut(&key).and_then(VecDeque::pop_front) {
                    out.push(Span { agent: key.0, label: key.1, start, end: e.t_ns });
                }
            }
            _ => {}
        }
    }
    out.sort_by_key(|s| s.start);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(agent: u64, seq: u64, t: u64, kind: EventKind, guard: (u64, u64)) -> TraceRecord {
        let mut e = TraceEvent::new(kind);
        e.agent = AgentId(agent);
        e.seq = seq;
        e.t_ns = t;
        e.guard = Some(GuardRef { agent: AgentId(guard.0), guard: guard.1 });
        TraceRecord::Event(e)
    }

    #[test]
    fn detects_missing_and_double_release() {
        let recs = vec![
            ev(1, 0, 1, EventKind::Issue, (1, 1)),
            ev(1, 1, 2, EventKind::Issue, (1, 2)),
            ev(1, 2, 3, EventKind::Release, (1, 2)),
            ev(1, 3, 4, EventKind::Release, (1, 2)),
        ];
        let v = guard_protocol(&recs);
        assert!(v.iter().any(|s| s.contains("1:1 never released")));
        assert!(v.iter().any(|s| s.contains("1:2 released 2 times")));
    }

    #[test]
    fn laminar_and_crossing_intervals() {
        let nested = vec![
            ev(1, 0, 1, EventKind::Issue, (1, 1)),
            ev(2, 0, 2, EventKind::Issue, (2, 1)),
            ev(2, 1, 3, EventKind::Release, (2, 1)),
            ev(1, 1, 4, EventKind::Release, (1, 1)),
        ];
        assert!(single_chain_in_flight(&nested).is_empty());
        assert_eq!(max_in_flight(&nested), 2);
        let crossing = vec![
            ev(1, 0, 1, EventKind::Issue, (1, 1)),
            ev(1, 1, 2, EventKind::Issue, (1, 2)),
            ev(1, 2, 3, EventKind::Release, (1, 1)),
            ev(1, 3, 4, EventKind::Release, (1, 2)),
        ];
        assert_eq!(single_chain_in_flight(&crossing).len(), 1);
    }
}
