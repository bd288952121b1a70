use crate::runtime::trace::{EventKind, TraceEvent, TraceRecord, WireRecord};
use crate::wire::{AgentId, GuardRef};
use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read trace: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace is empty")]
    Empty,
    #[error("invalid trace:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

/// A validated, merged trace ordered by `(agent, seq)`.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    /// Validates `records`: every agent's sequence numbers run from 0 without
    /// gaps or repeats, and every wire record belongs to a guard that its
    /// owning agent issued.
    pub fn from_records(mut records: Vec<TraceRecord>) -> Result<Trace, TraceError> {
        records.sort_by_key(|r| (r.agent(), r.seq()));
        let mut problems = Vec::new();
        let mut expected: BTreeMap<AgentId, u64> = BTreeMap::new();
        for r in &records {
            let next = expected.entry(r.agent()).or_insert(0);
            if r.seq() != *next {
                if r.seq() < *next {
                    problems.push(format!("{}: duplicate seq {}", r.agent(), r.seq()));
                } else {
                    problems.push(format!("{}: seq gap, expected {} but found {}", r.agent(), next, r.seq()));
                }
            }
            *next = r.seq() + 1;
        }
        let issued: HashSet<GuardRef> = records
            .iter()
            .filter_map(|r| match r {
                TraceRecord::Event(e) if e.kind == EventKind::Issue && Some(e.agent) == e.guard.map(|g| g.agent) => e.guard,
                _ => None,
            })
            .collect();
        for r in &records {
            if let TraceRecord::Wire(w) = r {
                match w.guard {
                    Some(g) if issued.contains(&g) => {}
                    Some(g) => problems.push(format!(
                        "{}: orphan wire record seq {} ({}) for guard {}:{} with no issue event",
                        w.src,
                        w.seq,
                        crate::wire::tag_name(w.tag),
                        g.agent.0,
                        g.guard
                    )),
                    None => problems.push(format!("{}: wire record seq {} has no guard", w.src, w.seq)),
                }
            }
        }
        if problems.is_empty() {
            Ok(Trace { records })
        } else {
            Err(TraceError::Invalid(problems))
        }
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn events(&self) -> impl Iterator<Item = &TraceEvent> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Event(e) => Some(e),
            TraceRecord::Wire(_) => None,
        })
    }

    pub fn wires(&self) -> impl Iterator<Item = &WireRecord> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Wire(w) => Some(w),
            TraceRecord::Event(_) => None,
        })
    }

    pub fn agents(&self) -> Vec<AgentId> {
        let mut a: Vec<AgentId> = self.records.iter().map(TraceRecord::agent).collect();
        a.dedup();
        a
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Parses JSON-lines text. Blank lines are ignored; an input with no
/// records is an error.
pub fn parse_trace(text: &str) -> Result<Trace, TraceError> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| TraceError::Parse { line: i + 1, message: e.to_string() })?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(TraceError::Empty);
    }
    Trace::from_records(records)
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace, TraceError> {
    parse_trace(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::trace::to_json_lines;

    fn ev(agent: u64, seq: u64, kind: EventKind, guard: Option<(u64, u64)>) -> TraceRecord {
        let mut e = TraceEvent::new(kind);
        e.agent = AgentId(agent);
        e.seq = seq;
        e.guard = guard.map(|(a, g)| GuardRef { agent: AgentId(a), guard: g });
        TraceRecord::Event(e)
    }

    fn wire(src: u64, seq: u64, guard: (u64, u64)) -> TraceRecord {
        TraceRecord::Wire(WireRecord {
            seq,
            src: AgentId(src),
            dst: AgentId(1),
            tag: 4,
            bytes: 39,
            payload_len: 0,
            guard: Some(GuardRef { agent: AgentId(guard.0), guard: guard.1 }),
            object: None,
            window: Some(0),
            digest: None,
            t_ns: 0,
        })
    }

    #[test]
    fn valid_two_agent_trace() {
        let recs = vec![ev(1, 0, EventKind::Issue, Some((1, 1))), wire(1, 1, (1, 1)), ev(2, 0, EventKind::Dispatch, None), wire(2, 1, (1, 1))];
        let t = parse_trace(&to_json_lines(&recs)).unwrap();
        assert_eq!(t.agents(), vec![AgentId(1), AgentId(2)]);
        assert_eq!(t.wires().count(), 2);
    }

    #[test]
    fn seq_gap_names_agent_and_seq() {
        let recs = vec![ev(1, 0, EventKind::Issue, Some((1, 1))), ev(2, 0, EventKind::Dispatch, None), ev(2, 2, EventKind::ExecStart, None)];
        let err = Trace::from_records(recs).unwrap_err().to_string();
        assert!(err.contains("agent#2: seq gap, expected 1 but found 2"), "{err}");
    }

    #[test]
    fn orphan_wire_record() {
        let recs = vec![ev(1, 0, EventKind::Issue, Some((1, 1))), wire(1, 1, (1, 5))];
        let err = Trace::from_records(recs).unwrap_err().to_string();
        assert!(err.contains("orphan wire record seq 1"), "{err}");
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse_trace(""), Err(TraceError::Empty)));
        assert!(matches!(parse_trace("not json"), Err(TraceError::Parse { line: 1, .. })));
    }
}
