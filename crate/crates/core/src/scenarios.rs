//! Ordering scenarios over a probe object whose method sleeps inside a
//! labelled span, plus checkers that read the resulting traces.
//!
//! Shapes:
//!
//! * barrier: `some(); barrier { special(); obj_0() .. obj_{N-1}() }; another();`
//! * loops (a)-(d), see [`LoopShape`], with statements `A(i)` and `B(i)`.

use crate::analysis::checks::{label_spans, Span};
use crate::api::{Ctx, Future, Params, RemoteError};
use crate::runtime::trace::TraceRecord;
use crate::runtime::{KindDescriptor, KindRegistry, RegistryError};
use crate::wire::{AgentId, KindId, MethodId, RemoteRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::thread;
use std::time::Duration;

pub const PROBE_KIND: KindId = KindId(0x0400);
/// `work(label: String, micros: u64)`: sleeps inside a span named `label`.
pub const PROBE_WORK: MethodId = MethodId(1);
/// Returns immediately.
pub const PROBE_PING: MethodId = MethodId(2);

pub struct Probe;

pub fn register(kinds: &mut KindRegistry) -> Result<(), RegistryError> {
    kinds.register(
        KindDescriptor::builder(PROBE_KIND, "Probe", |_, _| Ok(Probe))
            .shared_method(PROBE_WORK, |_: &Probe, ctx, args| {
                let label: String = args.get(0)?;
                let micros: u64 = args.get(1)?;
                ctx.local(&label, || thread::sleep(Duration::from_micros(micros)));
                Ok(())
            })
            .shared_method(PROBE_PING, |_: &Probe, _, _| Ok(()))
            .build(),
    )?;
    Ok(())
}

/// Builtin, application and probe kinds.
pub fn registry() -> KindRegistry {
    let mut kinds = crate::apps::registry();
    register(&mut kinds).expect("probe kind id is distinct");
    kinds
}

/// One probe per agent, in agent order.
pub fn probes(ctx: &Ctx) -> Result<Vec<RemoteRef>, RemoteError> {
    let fs = ctx.barrier(|c| {
        c.agents().iter().map(|a| c.construct(a.agent, PROBE_KIND, Params::new())).collect::<Vec<_>>()
    })?;
    fs.iter().map(Future::get).collect()
}

/// Seeded statement durations in microseconds.
pub struct Delays(ChaCha8Rng);

impl Delays {
    pub fn new(seed: u64) -> Delays {
        Delays(ChaCha8Rng::seed_from_u64(seed ^ 0xD1CE))
    }

    pub fn draw(&mut self) -> u64 {
        self.0.gen_range(100..1500)
    }
}

fn work(ctx: &Ctx, probe: RemoteRef, label: &str, micros: u64) -> Future<()> {
    ctx.invoke(probe, PROBE_WORK, Params::new().arg(label).arg(&micros))
}

/// Runs the barrier shape with `n` objects.
pub fn barrier_shape(ctx: &Ctx, probes: &[RemoteRef], n: usize, seed: u64) -> Result<(), RemoteError> {
    let mut d = Delays::new(seed);
    let delays: Vec<u64> = (0..=n + 1).map(|_| d.draw()).collect();
    ctx.local("some", || thread::sleep(Duration::from_micros(delays[0])));
    ctx.barrier(|c| {
        work(c, probes[0], "special", delays[1]);
        for i in 0..n {
            work(c, probes[(i + 1) % probes.len()], &format!("obj{i}"), delays[i + 2]);
        }
    })?;
    ctx.local("another", || ());
    Ok(())
}

/// Checks the barrier shape: every inner statement starts after `some`
/// ends, and `another` starts after every inner statement ends.
pub fn check_barrier_shape(records: &[TraceRecord], n: usize) -> Vec<String> {
    let spans = index(records);
    let mut out = Vec::new();
    let (Some(some), Some(another)) = (first(&spans, "some"), first(&spans, "another")) else {
        return vec!["missing some/another spans".into()];
    };
    let inner: Vec<String> = std::iter::once("special".to_string()).chain((0..n).map(|i| format!("obj{i}"))).collect();
    for label in &inner {
        match first(&spans, label) {
            None => out.push(format!("missing span {label}")),
            Some(s) => {
                if s.start < some.end {
                    out.push(format!("{label} started before some ended"));
                }
                if another.start < s.end {
                    out.push(format!("another started before {label} ended"));
                }
            }
        }
    }
    out
}

/// The four loop shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopShape {
    /// `for i { A(i); B(i) }`: no ordering at all.
    Parallel,
    /// `for i barrier { A(i); B(i) }`: iterations in order.
    SeqIterations,
    /// `for i { A(i); barrier { B(i) } }`: `A(i)` before `B(i)`.
    ParallelIterations,
    /// `for i { barrier { A(i) } barrier { B(i) } }`: total order.
    Sequential,
}

impl LoopShape {
    pub const ALL: [LoopShape; 4] =
        [LoopShape::Parallel, LoopShape::SeqIterations, LoopShape::ParallelIterations, LoopShape::Sequential];

    pub fn letter(self) -> char {
        match self {
            LoopShape::Parallel => 'a',
            LoopShape::SeqIterations => 'b',
            LoopShape::ParallelIterations => 'c',
            LoopShape::Sequential => 'd',
        }
    }
}

impl fmt::Display for LoopShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.letter())
    }
}

impl FromStr for LoopShape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        LoopShape::ALL
            .into_iter()
            .find(|l| s.trim_matches(|c| c == '(' || c == ')') == l.letter().to_string())
            .ok_or_else(|| format!("unknown loop shape {s:?}"))
    }
}

/// Runs a loop shape with `n` iterations; `A(i)` and `B(i)` go to
/// different agents when there are at least two.
pub fn loop_shape(ctx: &Ctx, probes: &[RemoteRef], shape: LoopShape, n: usize, seed: u64) -> Result<(), RemoteError> {
    let mut d = Delays::new(seed);
    let delays: Vec<(u64, u64)> = (0..n).map(|_| (d.draw(), d.draw())).collect();
    let p = |k: usize| probes[k % probes.len()];
    let a = |c: &Ctx, i: usize| {
        work(c, p(2 * i), &format!("A{i}"), delays[i].0);
    };
    let b = |c: &Ctx, i: usize| {
        work(c, p(2 * i + 1), &format!("B{i}"), delays[i].1);
    };
    match shape {
        LoopShape::Parallel => {
            ctx.iter_parallel(n, |c, i| {
                a(c, i);
                b(c, i);
            });
            ctx.drain()
        }
        LoopShape::SeqIterations => ctx.iter_seq_iterations(n, |c, i| {
            a(c, i);
            b(c, i);
        }),
        LoopShape::ParallelIterations => ctx.iter_parallel_iterations(n, a, b),
        LoopShape::Sequential => ctx.iter_sequential(n, a, b),
    }
}

fn index(records: &[TraceRecord]) -> HashMap<String, Vec<Span>> {
    let mut map: HashMap<String, Vec<Span>> = HashMap::new();
    for s in label_spans(records) {
        map.entry(s.label.clone()).or_default().push(s);
    }
    map
}

fn first<'a>(spans: &'a HashMap<String, Vec<Span>>, label: &str) -> Option<&'a Span> {
    spans.get(label).and_then(|v| v.first())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoopCheck {
    pub violations: Vec<String>,
    /// Pairs of statements whose executions overlapped in time.
    pub overlaps: usize,
    /// Statement labels in execution start order.
    pub order: Vec<String>,
}

/// Checks the ordering contract of `shape` against a trace.
pub fn check_loop_shape(records: &[TraceRecord], shape: LoopShape, n: usize) -> LoopCheck {
    let spans = index(records);
    let mut check = LoopCheck::default();
    let mut stmts: Vec<(usize, char, Span)> = Vec::new();
    for i in 0..n {
        for s in ['A', 'B'] {
            match first(&spans, &format!("{s}{i}")) {
                Some(span) => stmts.push((i, s, span.clone())),
                None => check.violations.push(format!("missing span {s}{i}")),
            }
        }
    }
    stmts.sort_by_key(|(_, _, s)| s.start);
    check.order = stmts.iter().map(|(i, s, _)| format!("{s}{i}")).collect();
    for (x, (i, si, a)) in stmts.iter().enumerate() {
        for (j, sj, b) in &stmts[x + 1..] {
            if a.overlaps(b) {
                check.overlaps += 1;
            }
            let (first_, second) = if a.start <= b.start { (a, b) } else { (b, a) };
            let ordered = first_.end <= second.start;
            let must_order = match shape {
                LoopShape::Parallel => false,
                LoopShape::SeqIterations => i != j,
                LoopShape::ParallelIterations => i == j,
                LoopShape::Sequential => true,
            };
            if must_order && !ordered {
                check.violations.push(format!("{si}{i} and {sj}{j} overlap"));
            }
            if shape == LoopShape::ParallelIterations && i == j && *si == 'B' && a.start < b.end {
                check.violations.push(format!("B{i} started before A{i} ended"));
            }
        }
    }
    match shape {
        LoopShape::Sequential => {
            let want: Vec<String> = (0..n).flat_map(|i| [format!("A{i}"), format!("B{i}")]).collect();
            if check.order != want {
                check.violations.push(format!("order {:?}, expected {want:?}", check.order));
            }
        }
        LoopShape::SeqIterations => {
            let iters: Vec<usize> = stmts.iter().map(|(i, _, _)| *i).collect();
            if iters.windows(2).any(|w| w[0] > w[1]) {
                check.violations.push(format!("iterations started out of order: {:?}", check.order));
            }
        }
        _ => {}
    }
    check
}

/// Issues a cheap invocation and reads its future only after the release
/// has already arrived, `rounds` times; then reads immediately after issue
/// `rounds` times so the release races the wait.
pub fn release_before_wait(ctx: &Ctx, target: AgentId, rounds: usize) -> Result<(), RemoteError> {
    let probe = ctx.construct(target, PROBE_KIND, Params::new()).get()?;
    for _ in 0..rounds {
        let f = ctx.invoke::<()>(probe, PROBE_PING, Params::new());
        while !f.is_ready() {
            thread::yield_now();
        }
        f.get()?;
        f.get()?;
    }
    for _ in 0..rounds {
        ctx.invoke::<()>(probe, PROBE_PING, Params::new()).get()?;
    }
    Ok(())
}
