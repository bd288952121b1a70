//! `parobj run`: spawn a cluster, run one app, verify, write the trace.

use crate::args::{AppName, RunArgs};
use crate::settings::Settings;
use crate::{Exit, Fail};
use parobj_core::analysis::checks::guard_protocol;
use parobj_core::analysis::{detect_broadcast, Trace};
use parobj_core::apps::bfs::{self, Graph};
use parobj_core::apps::fft::{self, FftConfig};
use parobj_core::apps::{broadcast, mapreduce};
use parobj_core::prelude::*;
use parobj_core::runtime::trace::{to_json_lines, TraceRecord};
use std::path::{Path, PathBuf};
use std::process::{Child, Stdio};
use std::time::Instant;

pub const DEFAULT_AGENTS: usize = 4;

#[derive(Debug, Clone)]
pub enum GraphSource {
    Random { vertices: usize, degree: f64 },
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub enum AppParams {
    MapReduce { workers: usize },
    Bfs { graph: GraphSource, parts: usize, root: u32 },
    Fft3d { config: FftConfig, full_scale: bool },
    Broadcast { arrays: usize, len: usize },
}

/// A fully resolved `run` invocation.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub app: AppParams,
    pub cluster: ClusterConfig,
    /// Settings handed to launched agent processes.
    pub agent_settings: Vec<String>,
    pub processes: bool,
    pub trace: Option<PathBuf>,
}

/// What a run printed and whether every check passed.
#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub lines: Vec<String>,
    pub passed: bool,
    /// Deterministic one-line digest of the app result, for comparing runs.
    pub result: String,
    pub records: Vec<TraceRecord>,
}

pub fn plan(args: RunArgs) -> Result<RunPlan, Fail> {
    let mut s = match &args.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    for pair in &args.set {
        s.insert_pair(pair).map_err(Fail::usage)?;
    }
    let agents = s.take("agents", args.agents)?.unwrap_or(DEFAULT_AGENTS);
    let transport = s.take("transport", args.transport)?.unwrap_or(TransportKind::InProc);
    let trace = s.take("trace", args.trace.clone())?;
    let processes = s.take_bool("processes", args.processes)?;
    s.set_flag("seed", args.seed);
    s.set_flag("mode", args.mode);
    s.set_flag("fuzz", args.fuzz.clone());

    let app = match args.app {
        AppName::Mapreduce => AppParams::MapReduce { workers: s.take("workers", args.workers)?.unwrap_or(100) },
        AppName::Bfs => {
            let edges = s.take("edges", args.edges.clone())?;
            let vertices = s.take("vertices", args.vertices)?.unwrap_or(4096);
            let degree = s.take("degree", args.degree)?.unwrap_or(16.0);
            let graph = match edges {
                Some(p) => GraphSource::File(p),
                None => GraphSource::Random { vertices, degree },
            };
            let parts = s.take("parts", args.parts)?.unwrap_or(agents);
            if parts == 0 {
                return Err(Fail::usage("parts must be at least 1"));
            }
            AppParams::Bfs { graph, parts, root: s.take("root", args.root)?.unwrap_or(0) }
        }
        AppName::Fft3d => {
            let d = FftConfig::default();
            let config = FftConfig {
                pages: s.take("pages", args.pages)?.unwrap_or(d.pages),
                page_size: s.take("page_size", args.page_size)?.unwrap_or(d.page_size),
                devices: s.take("devices", args.devices)?.unwrap_or(d.devices),
                cpus: s.take("cpus", args.cpus)?.unwrap_or(d.cpus),
                variant: s.take("variant", args.variant)?.unwrap_or(d.variant),
                input: s.take("input", args.input)?.unwrap_or(d.input),
                seed: 0,
            };
            fft::slab_ranges(config.pages, config.cpus).map_err(Fail::usage)?;
            if config.devices == 0 {
                return Err(Fail::usage("devices must be at least 1"));
            }
            AppParams::Fft3d { config, full_scale: s.take_bool("full_scale", args.full_scale)? }
        }
        AppName::Broadcast => {
            let arrays = s.take("arrays", args.arrays)?.unwrap_or(64);
            let len = s.take("len", args.len)?.unwrap_or(128);
            if arrays < 2 || len == 0 {
                return Err(Fail::usage("broadcast needs at least 2 arrays of at least 1 element"));
            }
            AppParams::Broadcast { arrays, len }
        }
    };

    let settings = s.into_map();
    let mut cluster = ClusterConfig::new(agents, transport);
    cluster.apply(&settings).map_err(|e| Fail::usage(e.to_string()))?;
    if processes && transport != TransportKind::Tcp {
        return Err(Fail::usage("--processes requires --transport tcp"));
    }
    let agent_settings = settings
        .iter()
        .filter(|(k, _)| !matches!(k.as_str(), "listen" | "agent_count"))
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    let mut plan = RunPlan { app, cluster, agent_settings, processes, trace };
    if let AppParams::Fft3d { config, .. } = &mut plan.app {
        config.seed = plan.cluster.runtime.seed;
    }
    Ok(plan)
}

pub fn cmd_run(args: RunArgs) -> Result<Exit, Fail> {
    let plan = plan(args)?;
    let exe = std::env::current_exe().map_err(|e| Fail::failure(format!("cannot locate own executable: {e}")))?;
    let outcome = execute(&plan, &exe)?;
    for line in &outcome.lines {
        println!("{line}");
    }
    Ok(if outcome.passed { Exit::Ok } else { Exit::Failure })
}

/// Spawns the cluster, runs the app and verifies it. `exe` is the
/// `parobj` binary used for `--processes`.
pub fn execute(plan: &RunPlan, exe: &Path) -> Result<RunOutcome, Fail> {
    if let AppParams::Fft3d { full_scale: true, config } = &plan.app {
        return Ok(RunOutcome {
            lines: vec![
                format!("desk scale: {}^3 pages of {}^3 elements", config.pages, config.page_size),
                format!("full scale: {}", fft::full_scale_projection()),
            ],
            passed: true,
            result: String::new(),
            records: Vec::new(),
        });
    }
    let graph = match &plan.app {
        AppParams::Bfs { graph, root, .. } => {
            let g = match graph {
                GraphSource::Random { vertices, degree } => {
                    Graph::erdos_renyi(*vertices, *degree, plan.cluster.runtime.seed)
                }
                GraphSource::File(p) => Graph::load_edge_list(p).map_err(Fail::usage)?,
            };
            if *root as usize >= g.vertices() {
                return Err(Fail::usage(format!("root {root} outside graph of {} vertices", g.vertices())));
            }
            Some(g)
        }
        _ => None,
    };

    let kinds = parobj_core::scenarios::registry();
    let cluster = if plan.processes {
        let settings = plan.agent_settings.clone();
        Cluster::spawn_with_processes(plan.cluster.clone(), kinds, |id, registry| {
            launch_agent(exe, id, registry, &settings)
        })
    } else {
        Cluster::spawn(plan.cluster.clone(), kinds)
    }
    .map_err(|e| Fail::failure(format!("cannot start cluster: {e}")))?;

    let mut out = RunOutcome { passed: true, ..Default::default() };
    out.lines.push(format!(
        "cluster: {} agents, transport {}{}, mode {}, seed {}",
        cluster.len(),
        plan.cluster.transport,
        if plan.processes { " (separate processes)" } else { "" },
        plan.cluster.runtime.mode,
        plan.cluster.runtime.seed
    ));
    let started = Instant::now();
    let app_result = run_app(&cluster, plan, graph.as_ref(), &mut out);
    let elapsed = started.elapsed();
    let report = cluster.shutdown();
    if let Err(e) = app_result {
        out.lines.push(format!("error: {e}"));
        out.passed = false;
    }
    out.lines.push(format!("elapsed: {:.3} s", elapsed.as_secs_f64()));

    if let Some(path) = &plan.trace {
        std::fs::write(path, to_json_lines(&report.records))
            .map_err(|e| Fail::failure(format!("cannot write trace {}: {e}", path.display())))?;
        out.lines.push(format!("trace: {} records written to {}", report.records.len(), path.display()));
    }
    if let AppParams::Broadcast { arrays, .. } = plan.app {
        if out.passed {
            verify_broadcast(&report.records, arrays, &mut out);
        }
    }
    let protocol = guard_protocol(&report.records);
    for p in protocol.iter().chain(&report.faults) {
        out.lines.push(format!("fault: {p}"));
    }
    if protocol.is_empty() && report.faults.is_empty() {
        out.lines.push("guard protocol: ok".into());
    } else {
        out.passed = false;
    }
    out.lines.push(format!("verdict: {}", if out.passed { "PASS" } else { "FAIL" }));
    out.records = report.records;
    Ok(out)
}

fn launch_agent(exe: &Path, id: AgentId, registry: &str, settings: &[String]) -> std::io::Result<Child> {
    let mut cmd = std::process::Command::new(exe);
    cmd.args(["launch", "--agent", &id.0.to_string(), "--registry", registry]);
    for s in settings {
        cmd.args(["--set", s]);
    }
    cmd.stdin(Stdio::null()).stdout(Stdio::null()).stderr(Stdio::inherit()).spawn()
}

fn run_app(cluster: &Cluster, plan: &RunPlan, graph: Option<&Graph>, out: &mut RunOutcome) -> Result<(), RemoteError> {
    let seed = plan.cluster.runtime.seed;
    match &plan.app {
        AppParams::MapReduce { workers } => {
            let data = mapreduce::seeded_data(seed, *workers);
            let total = cluster.run(|ctx| mapreduce::mapreduce_demo(ctx, *workers, &data))??;
            let oracle = mapreduce::mapreduce_oracle(&data);
            let same = total.to_bits() == oracle.to_bits();
            out.lines.push(format!("mapreduce: {workers} workers"));
            out.lines.push(format!("total: {total:.17e}"));
            out.lines.push(format!("oracle: {oracle:.17e}"));
            out.lines.push(format!("bit-identical to oracle: {}", yes_no(same)));
            out.result = format!("{:016x}", total.to_bits());
            out.passed &= same;
        }
        AppParams::Bfs { parts, root, .. } => {
            let g = graph.expect("graph loaded for bfs");
            let run = cluster.run(|ctx| {
                let refs = bfs::distribute(ctx, g, *parts)?;
                bfs::graph_build_tree(ctx, &refs, g.vertices(), *root)
            })??;
            let report = bfs::bfs_validate(g, &run.parents, *root);
            let reached = run.parents.iter().filter(|&&p| p >= 0).count();
            out.lines.push(format!(
                "bfs: {} vertices, {} edges, {} parts, root {root}",
                g.vertices(),
                g.edge_count(),
                parts
            ));
            out.lines.push(format!("iterations: {}  reached: {reached}", run.iterations));
            for c in &report.checks {
                let verdict = if c.failures.is_empty() { "pass".to_string() } else { format!("FAIL ({})", c.failures.len()) };
                out.lines.push(format!("check {}: {verdict}", c.name));
            }
            out.lines.extend(report.failures().take(20).map(|f| format!("  {f}")));
            out.lines.push(format!("levels match oracle: {}", yes_no(report.levels_match_oracle())));
            out.lines.push(format!("level histogram: {:?}", bfs::level_histogram(&report.levels)));
            out.result = format!("{}:{:?}", run.iterations, run.parents);
            out.passed &= report.passed() && report.levels_match_oracle();
        }
        AppParams::Fft3d { config, .. } => {
            let r = cluster.run(|ctx| fft::fft3d_demo(ctx, config))??;
            let c = &r.comparison;
            out.lines.push(format!(
                "fft3d: {} array as {} pages of {}, variant {}",
                r.global, r.array_domain, r.page_domain, config.variant
            ));
            out.lines.push(format!("device hosts on agents: {:?}", r.device_agents.iter().map(|a| a.0).collect::<Vec<_>>()));
            out.lines.push(format!("cpu hosts on agents: {:?}", r.cpu_agents.iter().map(|a| a.0).collect::<Vec<_>>()));
            out.lines.push(format!("transform time: {:.3} s", r.transform_time.as_secs_f64()));
            out.lines.push(format!(
                "max abs error: {:.3e} at {:?} (oracle rms {:.3e}, tolerance {:.0e} x rms)",
                c.max_abs_error,
                c.max_error_at,
                c.reference_rms,
                fft::FFT_TOLERANCE
            ));
            out.lines.push(format!("parseval relative error: {:.3e}", c.parseval_relative));
            out.result = format!("{}", r.passed);
            out.passed &= r.passed;
        }
        AppParams::Broadcast { arrays, len } => {
            let values = broadcast::broadcast_values(*len);
            let run = cluster.run(|ctx| broadcast::broadcast_demo(ctx, *arrays, &values))??;
            out.lines.push(format!("broadcast: {} arrays of {len} doubles, payload {} bytes", run.arrays.len(), run.payload_len));
            out.result = format!("{}x{}", run.arrays.len(), run.payload_len);
        }
    }
    Ok(())
}

fn verify_broadcast(records: &[TraceRecord], arrays: usize, out: &mut RunOutcome) {
    let trace = match Trace::from_records(records.to_vec()) {
        Ok(t) => t,
        Err(e) => {
            out.lines.push(format!("trace invalid: {e}"));
            out.passed = false;
            return;
        }
    };
    let groups = detect_broadcast(&trace, 2);
    for g in &groups {
        out.lines.push(format!(
            "broadcast group: source {} fanout {} payload {} bytes, bytes saved {}",
            g.source,
            g.fanout(),
            g.payload_len,
            g.bytes_saved
        ));
    }
    let ok = groups.len() == 1
        && groups[0].fanout() == arrays
        && groups[0].bytes_saved == groups[0].payload_len * (arrays as u64 - 1);
    out.lines.push(format!("single group of fanout {arrays}: {}", yes_no(ok)));
    out.passed &= ok;
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "NO"
    }
}
