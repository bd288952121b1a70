use parobj_core::analysis::{checks, detect_broadcast, Trace};
use parobj_core::apps::{self, bfs, broadcast, fft, mapreduce};
use parobj_core::prelude::*;
use parobj_core::runtime::trace::{EventKind, TraceRecord};
use std::collections::BTreeMap;
use std::time::Duration;

fn cluster_with(n: usize, f: impl FnOnce(&mut ClusterConfig)) -> Cluster {
    let mut cfg = ClusterConfig::new(n, TransportKind::InProc);
    cfg.runtime.wait_timeout = Some(Duration::from_secs(60));
    f(&mut cfg);
    Cluster::spawn(cfg, apps::registry()).unwrap()
}

fn cluster(n: usize) -> Cluster {
    cluster_with(n, |_| {})
}

fn finish(c: Cluster) -> Vec<TraceRecord> {
    let report = c.shutdown();
    assert!(report.faults.is_empty(), "{:?}", report.faults);
    let v = checks::guard_protocol(&report.records);
    assert!(v.is_empty(), "{v:?}");
    report.records
}

#[test]
fn mapreduce_hand_sum_and_empty() {
    let c = cluster(4);
    let total = c.run(|ctx| mapreduce::mapreduce_demo(ctx, 4, &[0.0, 1.0, 2.0, 3.0])).unwrap().unwrap();
    assert_eq!(total, 14.0);
    let empty = c.run(|ctx| mapreduce::mapreduce_demo(ctx, 0, &[])).unwrap().unwrap();
    assert_eq!(empty, 0.0);
    assert!(c.run(|ctx| mapreduce::mapreduce_demo(ctx, 2, &[1.0])).unwrap().is_err());
    finish(c);
}

#[test]
fn mapreduce_matches_oracle_bit_exactly() {
    let data = mapreduce::seeded_data(11, 1000);
    let c = cluster(8);
    let total = c.run(|ctx| mapreduce::mapreduce_demo(ctx, data.len(), &data)).unwrap().unwrap();
    assert_eq!(total.to_bits(), mapreduce::mapreduce_oracle(&data).to_bits());
    finish(c);
}

fn run_bfs(c: &Cluster, g: &bfs::Graph, parts: usize, root: u32) -> Result<bfs::BfsRun, RemoteError> {
    c.run(|ctx| {
        let refs = bfs::distribute(ctx, g, parts)?;
        bfs::graph_build_tree(ctx, &refs, g.vertices(), root)
    })
    .unwrap()
}

#[test]
fn bfs_path_graph() {
    let c = cluster(2);
    let run = run_bfs(&c, &bfs::Graph::path(4), 2, 0).unwrap();
    assert_eq!(run.parents, vec![0, 0, 1, 2]);
    assert_eq!(run.iterations, 4);
    assert!(bfs::bfs_validate(&bfs::Graph::path(4), &run.parents, 0).passed());
    finish(c);
}

#[test]
fn bfs_star_graph() {
    let c = cluster(3);
    let g = bfs::Graph::star(9);
    let run = run_bfs(&c, &g, 3, 0).unwrap();
    assert!(run.parents.iter().all(|&p| p == 0));
    // One iteration sets every leaf, the next finds all frontiers empty.
    assert_eq!(run.iterations, 2);
    finish(c);
}

#[test]
fn bfs_invalid_root_is_an_error() {
    let c = cluster(2);
    assert!(run_bfs(&c, &bfs::Graph::path(4), 2, 4).is_err());
    finish(c);
}

#[test]
fn bfs_random_graph_validates_and_iterations_do_not_overlap() {
    let g = bfs::Graph::erdos_renyi(1024, 8.0, 3);
    let c = cluster(4);
    let run = run_bfs(&c, &g, 4, 0).unwrap();
    let report = bfs::bfs_validate(&g, &run.parents, 0);
    assert!(report.passed(), "{:?}", report.failures().collect::<Vec<_>>());
    assert!(report.levels_match_oracle());
    assert_eq!(bfs::level_histogram(&report.levels), bfs::level_histogram(&bfs::bfs_levels(&g, 0)));
    let records = finish(c);

    let mut spans = BTreeMap::new();
    for r in &records {
        if let TraceRecord::Event(e) = r {
            if e.method == Some(bfs::BUILD_STEP.0) && matches!(e.kind, EventKind::ExecStart | EventKind::ExecEnd) {
                let s = spans.entry(e.guard.unwrap()).or_insert((u64::MAX, 0));
                if e.kind == EventKind::ExecStart {
                    s.0 = e.t_ns;
                } else {
                    s.1 = e.t_ns;
                }
            }
        }
    }
    let mut spans: Vec<(u64, u64)> = spans.into_values().collect();
    spans.sort();
    assert_eq!(spans.len(), 4 * run.iterations);
    let iterations: Vec<_> = spans.chunks(4).collect();
    for w in iterations.windows(2) {
        let end = w[0].iter().map(|s| s.1).max().unwrap();
        let start = w[1].iter().map(|s| s.0).min().unwrap();
        assert!(end < start, "iterations overlap");
    }
}

#[test]
fn bfs_tree_is_independent_of_partitioning() {
    let g = bfs::Graph::erdos_renyi(500, 6.0, 9);
    let c = cluster(3);
    let a = run_bfs(&c, &g, 1, 7).unwrap();
    let b = run_bfs(&c, &g, 3, 7).unwrap();
    let d = run_bfs(&c, &g, 5, 7).unwrap();
    assert_eq!(a.parents, b.parents);
    assert_eq!(a.parents, d.parents);
    finish(c);
}

#[test]
fn circulant_allocation_places_pages() {
    let c = cluster(4);
    let devices: Vec<AgentId> = (1..=4).map(AgentId).collect();
    let dom = fft::Domain3::cube(4).unwrap();
    let arr = c.run(|ctx| fft::array_allocate(ctx, dom, fft::Domain3::cube(2).unwrap(), &devices)).unwrap().unwrap();
    let mut counts = BTreeMap::new();
    for j1 in 0..4 {
        for j2 in 0..4 {
            for j3 in 0..4 {
                let r = arr.page(j1, j2, j3);
                assert_eq!(r.agent, devices[(j1 + j2 + j3) % 4]);
                *counts.entry(r.agent).or_insert(0) += 1;
            }
        }
    }
    assert!(counts.values().all(|&n| n == 16));
    let one = c
        .run(|ctx| fft::array_allocate(ctx, fft::Domain3::cube(1).unwrap(), dom, &devices[..1]))
        .unwrap()
        .unwrap();
    assert_eq!(one.pages[0].agent, devices[0]);
    finish(c);
}

fn transposes_by_agent(records: &[TraceRecord]) -> (BTreeMap<AgentId, usize>, BTreeMap<AgentId, usize>) {
    let (mut remote, mut local) = (BTreeMap::new(), BTreeMap::new());
    for r in records {
        if let TraceRecord::Event(e) = r {
            if e.kind != EventKind::ExecStart {
                continue;
            }
            if e.method == Some(fft::PAGE_TRANSPOSE13.0) && e.guard.is_some() {
                *remote.entry(e.agent).or_insert(0) += 1;
            }
            if e.label.as_deref() == Some("transpose13") {
                *local.entry(e.agent).or_insert(0) += 1;
            }
        }
    }
    (remote, local)
}

#[test]
fn read_page_line_variants_agree() {
    let c = cluster(4);
    let devices = [AgentId(2), AgentId(3), AgentId(4)];
    let pages = fft::Domain3::new(2, 3, 4).unwrap();
    let (dev, rdr, zero) = c
        .run(|ctx| {
            let arr = fft::array_allocate(ctx, fft::Domain3::new(3, 2, 2).unwrap(), pages, &devices)?;
            let zero = fft::read_page_line(ctx, &arr.line(0, 0), pages, fft::ReadVariant::TransposeAtReader)?;
            let data = fft::make_input(fft::FftInput::Random, arr.global(), 4);
            arr.scatter(ctx, &data)?;
            let line = arr.line(1, 0);
            let dev = fft::read_page_line(ctx, &line, pages, fft::ReadVariant::TransposeAtDevice)?;
            fft::write_page_line(ctx, &line, dev.clone(), fft::ReadVariant::TransposeAtDevice)?;
            let rdr = fft::read_page_line(ctx, &line, pages, fft::ReadVariant::TransposeAtReader)?;
            assert_eq!(arr.gather(ctx)?, data, "device round trip restores the layout");
            Ok::<_, RemoteError>((dev, rdr, zero))
        })
        .unwrap()
        .unwrap();
    let bytes = |l: &[fft::ArrayPage]| l.iter().flat_map(|p| p.to_bytes()).collect::<Vec<u8>>();
    assert_eq!(bytes(&dev), bytes(&rdr));
    assert!(zero.iter().all(|p| p.values().iter().all(|v| v.norm() == 0.0)));
    let (remote, local) = transposes_by_agent(&finish(c));
    assert!(remote.keys().all(|a| devices.contains(a)) && !remote.is_empty());
    assert_eq!(local.keys().copied().collect::<Vec<_>>(), vec![AgentId(1)]);
}

fn small_fft(variant: fft::ReadVariant, input: fft::FftInput) -> fft::FftConfig {
    fft::FftConfig { pages: 2, page_size: 4, devices: 2, cpus: 2, variant, input, seed: 5 }
}

#[test]
fn fft3d_small_both_variants() {
    for variant in [fft::ReadVariant::TransposeAtDevice, fft::ReadVariant::TransposeAtReader] {
        let c = cluster(4);
        let report = c.run(|ctx| fft::fft3d_demo(ctx, &small_fft(variant, fft::FftInput::Random))).unwrap().unwrap();
        assert!(report.passed, "{:?}", report.comparison);
        assert_eq!(report.device_agents, vec![AgentId(1), AgentId(2)]);
        assert_eq!(report.cpu_agents, vec![AgentId(3), AgentId(4)]);
        let (remote, local) = transposes_by_agent(&finish(c));
        match variant {
            fft::ReadVariant::TransposeAtDevice => {
                assert!(local.is_empty());
                assert!(remote.keys().all(|a| report.device_agents.contains(a)));
            }
            fft::ReadVariant::TransposeAtReader => {
                // Only the two dimension-3 repartitions transpose at the devices.
                assert_eq!(remote.values().sum::<usize>(), 2 * 8);
                assert!(local.keys().all(|a| report.cpu_agents.contains(a)));
            }
        }
    }
}

#[test]
fn fft3d_zero_and_delta_inputs() {
    let c = cluster(4);
    let zero = c
        .run(|ctx| fft::fft3d_demo(ctx, &small_fft(fft::ReadVariant::TransposeAtDevice, fft::FftInput::Zeros)))
        .unwrap()
        .unwrap();
    assert_eq!(zero.comparison.max_abs_error, 0.0);
    assert!(zero.passed);
    let delta = c
        .run(|ctx| fft::fft3d_demo(ctx, &small_fft(fft::ReadVariant::TransposeAtDevice, fft::FftInput::Delta)))
        .unwrap()
        .unwrap();
    assert!(delta.passed);
    assert!((delta.comparison.reference_rms - 1.0).abs() < 1e-12);
    finish(c);
}

#[test]
fn fft_rejects_uneven_slabs() {
    let c = cluster(2);
    let mut cfg = small_fft(fft::ReadVariant::TransposeAtDevice, fft::FftInput::Random);
    cfg.cpus = 3;
    assert!(matches!(c.run(|ctx| fft::fft3d_demo(ctx, &cfg)).unwrap(), Err(RemoteError::Usage(_))));
    finish(c);
}

#[test]
fn cpu_hosts_are_created_after_allocation() {
    let c = cluster(4);
    c.run(|ctx| fft::fft3d_demo(ctx, &small_fft(fft::ReadVariant::TransposeAtDevice, fft::FftInput::Random)))
        .unwrap()
        .unwrap();
    let records = finish(c);
    let mut page_guards = Vec::new();
    let mut cpu_issues = Vec::new();
    let mut device_issues = Vec::new();
    for r in &records {
        if let TraceRecord::Event(e) = r {
            if e.kind == EventKind::Issue {
                match e.label.as_deref() {
                    Some("ArrayPage") => page_guards.push(e.guard.unwrap()),
                    Some(l) if l.starts_with("host:cpu") => cpu_issues.push(e.t_ns),
                    Some(l) if l.starts_with("host:device") => device_issues.push(e.t_ns),
                    _ => {}
                }
            }
        }
    }
    let page_releases: Vec<u64> = records
        .iter()
        .filter_map(|r| match r {
            TraceRecord::Event(e) if e.kind == EventKind::Release && page_guards.contains(&e.guard.unwrap()) => {
                Some(e.t_ns)
            }
            _ => None,
        })
        .collect();
    assert_eq!(page_releases.len(), 8);
    assert_eq!(cpu_issues.len(), 2);
    assert_eq!(device_issues.len(), 2);
    assert!(cpu_issues.iter().min() > page_releases.iter().max());
}

/// Spans of one slab with four page lines on a single cpu agent.
fn slab_schedule(seed: u64) -> Vec<checks::Span> {
    let c = cluster_with(3, |cfg| {
        cfg.runtime.seed = seed;
        cfg.runtime.fuzz = Some((0, 300));
    });
    c.run(|ctx| {
        let arr = fft::array_allocate(
            ctx,
            fft::Domain3::new(2, 1, 4).unwrap(),
            fft::Domain3::cube(2).unwrap(),
            &[AgentId(2), AgentId(3)],
        )?;
        let data = fft::make_input(fft::FftInput::Random, arr.global(), seed);
        arr.scatter(ctx, &data)?;
        fft::array_fft1(ctx, &arr, &[AgentId(1)], fft::ReadVariant::TransposeAtDevice)?;
        let out = arr.gather(ctx)?;
        let g = arr.global();
        for j in 0..g.n2 {
            for k in 0..g.n3 {
                let col: Vec<_> = (0..g.n1).map(|i| data[g.index(i, j, k)]).collect();
                for (i, want) in fft::dft_direct(&col).iter().enumerate() {
                    assert!((out[g.index(i, j, k)] - want).norm() < 1e-12);
                }
            }
        }
        Ok::<_, RemoteError>(())
    })
    .unwrap()
    .unwrap();
    checks::label_spans(&finish(c))
}

#[test]
fn slab_pipeline_overlaps_and_respects_the_barrier() {
    let mut overlapped = 0;
    for seed in 0..100 {
        let spans = slab_schedule(seed);
        let find = |label: String| spans.iter().find(|s| s.label == label).cloned();
        for i3 in 0..4 {
            let fft_span = find(format!("fft_line:0:{i3}")).expect("fft span");
            let write = find(format!("write_line:0:{i3}")).expect("write span");
            assert!(write.start >= fft_span.end);
            if i3 + 1 < 4 {
                let read = find(format!("read_line:0:{}", i3 + 1)).expect("read span");
                assert!(write.start >= read.end, "write of line {i3} before next read finished");
                if read.overlaps(&fft_span) {
                    overlapped += 1;
                }
            } else {
                assert!(find(format!("read_line:0:{}", i3 + 1)).is_none());
            }
        }
    }
    assert!(overlapped >= 1);
}

#[test]
fn single_line_slab() {
    let c = cluster(2);
    c.run(|ctx| {
        let arr =
            fft::array_allocate(ctx, fft::Domain3::new(2, 1, 1).unwrap(), fft::Domain3::cube(2).unwrap(), &[AgentId(2)])?;
        arr.scatter(ctx, &fft::make_input(fft::FftInput::Delta, arr.global(), 0))?;
        fft::array_fft1(ctx, &arr, &[AgentId(1)], fft::ReadVariant::TransposeAtReader)?;
        let out = arr.gather(ctx)?;
        let g = arr.global();
        for i in 0..g.n1 {
            assert!((out[g.index(i, 0, 0)].re - 1.0).abs() < 1e-12);
        }
        Ok::<_, RemoteError>(())
    })
    .unwrap()
    .unwrap();
    let spans = checks::label_spans(&finish(c));
    assert!(spans.iter().all(|s| !s.label.starts_with("read_line")));
}

#[test]
fn broadcast_loop_is_one_group() {
    let c = cluster(8);
    let values = broadcast::broadcast_values(128);
    let run = c.run(|ctx| broadcast::broadcast_demo(ctx, 64, &values)).unwrap().unwrap();
    let trace = Trace::from_records(finish(c)).unwrap();
    let groups = detect_broadcast(&trace, 2);
    assert_eq!(groups.len(), 1, "{groups:?}");
    assert_eq!(groups[0].fanout(), 64);
    assert_eq!(groups[0].payload_len, run.payload_len);
    assert_eq!(groups[0].bytes_saved, 63 * 1024);
}

#[test]
fn sequential_mode_matches_and_keeps_one_chain() {
    let data = mapreduce::seeded_data(2, 40);
    let g = bfs::Graph::erdos_renyi(200, 4.0, 2);
    let mut results = Vec::new();
    for mode in [ExecMode::CausalAsync, ExecMode::DistributedSequential] {
        let c = cluster_with(4, |cfg| cfg.runtime.mode = mode);
        let total = c.run(|ctx| mapreduce::mapreduce_demo(ctx, data.len(), &data)).unwrap().unwrap();
        let tree = run_bfs(&c, &g, 4, 0).unwrap();
        let cfg = small_fft(fft::ReadVariant::TransposeAtDevice, fft::FftInput::Random);
        let out = c
            .run(|ctx| {
                let arr = fft::array_allocate(
                    ctx,
                    fft::Domain3::cube(2).unwrap(),
                    fft::Domain3::cube(4).unwrap(),
                    &[AgentId(1), AgentId(2)],
                )?;
                arr.scatter(ctx, &fft::make_input(cfg.input, arr.global(), cfg.seed))?;
                fft::array_fft3(ctx, &arr, &[AgentId(3), AgentId(4)], cfg.variant)?;
                arr.gather(ctx)
            })
            .unwrap()
            .unwrap();
        let records = finish(c);
        if mode == ExecMode::DistributedSequential {
            let v = checks::single_chain_in_flight(&records);
            assert!(v.is_empty(), "{:?}", &v[..v.len().min(5)]);
        }
        results.push((total.to_bits(), tree.parents, out.iter().map(|c| (c.re.to_bits(), c.im.to_bits())).collect::<Vec<_>>()));
    }
    assert_eq!(results[0], results[1]);
}
