use parobj_core::analysis::checks;
use parobj_core::prelude::*;
use parobj_core::runtime::trace::TraceRecord;
use parobj_core::scenarios::{self, LoopShape};
use std::time::Duration;

const SCHEDULES: u64 = 100;

fn fuzzed(n: usize, seed: u64) -> Cluster {
    let mut cfg = ClusterConfig::new(n, TransportKind::InProc);
    cfg.runtime.seed = seed;
    cfg.runtime.fuzz = Some((0, 200));
    cfg.runtime.wait_timeout = Some(Duration::from_secs(30));
    Cluster::spawn(cfg, scenarios::registry()).unwrap()
}

fn finish(c: Cluster) -> Vec<TraceRecord> {
    let report = c.shutdown();
    assert!(report.faults.is_empty(), "{:?}", report.faults);
    let v = checks::guard_protocol(&report.records);
    assert!(v.is_empty(), "{v:?}");
    report.records
}

#[test]
fn barrier_shape_under_fuzz() {
    for seed in 0..SCHEDULES {
        let c = fuzzed(4, seed);
        c.run(|ctx| {
            let probes = scenarios::probes(ctx)?;
            scenarios::barrier_shape(ctx, &probes, 5, seed)
        })
        .unwrap()
        .unwrap();
        let v = scenarios::check_barrier_shape(&finish(c), 5);
        assert!(v.is_empty(), "seed {seed}: {v:?}");
    }
}

#[test]
fn loop_shapes_under_fuzz() {
    for shape in LoopShape::ALL {
        let mut overlaps = 0;
        for seed in 0..SCHEDULES {
            let c = fuzzed(4, seed);
            c.run(|ctx| {
                let probes = scenarios::probes(ctx)?;
                scenarios::loop_shape(ctx, &probes, shape, 3, seed)
            })
            .unwrap()
            .unwrap();
            let check = scenarios::check_loop_shape(&finish(c), shape, 3);
            assert!(check.violations.is_empty(), "{shape} seed {seed}: {:?}", check.violations);
            overlaps += check.overlaps;
            if shape == LoopShape::Sequential {
                assert_eq!(check.order, ["A0", "B0", "A1", "B1", "A2", "B2"]);
                assert_eq!(check.overlaps, 0);
            }
        }
        if shape == LoopShape::Parallel {
            assert!(overlaps >= 1, "no overlap observed for {shape}");
        }
    }
}

#[test]
fn parallel_loop_with_one_iteration_does_not_serialize() {
    let c = fuzzed(2, 1);
    c.run(|ctx| {
        let probes = scenarios::probes(ctx)?;
        scenarios::loop_shape(ctx, &probes, LoopShape::Parallel, 1, 1)
    })
    .unwrap()
    .unwrap();
    let check = scenarios::check_loop_shape(&finish(c), LoopShape::Parallel, 1);
    assert!(check.violations.is_empty());
    assert_eq!(check.order.len(), 2);
}

#[test]
fn nested_barrier_drains_before_following_statements() {
    for seed in 0..SCHEDULES {
        let c = fuzzed(3, seed);
        c.run(|ctx| {
            let probes = scenarios::probes(ctx)?;
            let w = |c: &Ctx, p: usize, l: &str| {
                c.invoke::<()>(probes[p], scenarios::PROBE_WORK, Params::new().arg(l).arg(&300u64));
            };
            ctx.barrier(|c| {
                w(c, 0, "outer0");
                c.barrier(|c| {
                    w(c, 1, "inner0");
                    w(c, 2, "inner1");
                })?;
                w(c, 0, "outer1");
                Ok::<_, RemoteError>(())
            })??;
            w(ctx, 1, "after");
            ctx.drain()
        })
        .unwrap()
        .unwrap();
        let spans = checks::label_spans(&finish(c));
        let get = |l: &str| spans.iter().find(|s| s.label == l).unwrap().clone();
        let (o0, i0, i1, o1, after) = (get("outer0"), get("inner0"), get("inner1"), get("outer1"), get("after"));
        assert!(i0.start >= o0.end && i1.start >= o0.end, "seed {seed}");
        assert!(o1.start >= i0.end && o1.start >= i1.end, "seed {seed}");
        assert!(after.start >= o1.end, "seed {seed}");
    }
}

#[test]
fn release_before_wait_never_loses_a_wakeup() {
    for transport in [TransportKind::InProc, TransportKind::Tcp] {
        let mut cfg = ClusterConfig::new(2, transport);
        cfg.runtime.wait_timeout = Some(Duration::from_secs(10));
        let c = Cluster::spawn(cfg, scenarios::registry()).unwrap();
        c.run(|ctx| scenarios::release_before_wait(ctx, AgentId(2), 1000)).unwrap().unwrap();
        finish(c);
    }
}

#[test]
fn local_work_overlaps_remote_work_only_in_causal_mode() {
    for mode in [ExecMode::CausalAsync, ExecMode::DistributedSequential] {
        let mut cfg = ClusterConfig::new(2, TransportKind::InProc);
        cfg.runtime.mode = mode;
        let c = Cluster::spawn(cfg, scenarios::registry()).unwrap();
        c.run(|ctx| {
            let probe = ctx.construct(AgentId(2), scenarios::PROBE_KIND, Params::new());
            let done = ctx.invoke::<()>(&probe, scenarios::PROBE_WORK, Params::new().arg("remote").arg(&20_000u64));
            ctx.local("some", || std::thread::sleep(Duration::from_millis(20)));
            done.get()?;
            ctx.local("another", || ());
            Ok::<_, RemoteError>(())
        })
        .unwrap()
        .unwrap();
        let records = finish(c);
        let spans = checks::label_spans(&records);
        let get = |l: &str| spans.iter().find(|s| s.label == l).unwrap().clone();
        let (remote, some, another) = (get("remote"), get("some"), get("another"));
        assert!(another.start >= remote.end);
        match mode {
            ExecMode::CausalAsync => assert!(remote.overlaps(&some)),
            ExecMode::DistributedSequential => {
                assert!(!remote.overlaps(&some));
                assert!(checks::single_chain_in_flight(&records).is_empty());
            }
        }
    }
}
