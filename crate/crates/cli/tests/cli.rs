use parobj_core::prelude::*;
use parobj_core::transport::registry::RegistryServer;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

const BIN: &str = env!("CARGO_BIN_EXE_parobj");

fn parobj(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("parobj runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn line_value<'a>(text: &'a str, prefix: &str) -> &'a str {
    text.lines().find_map(|l| l.strip_prefix(prefix)).unwrap_or_else(|| panic!("no `{prefix}` line in:\n{text}"))
}

#[test]
fn run_fft3d_prints_max_error() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let o = parobj(&["run", "fft3d", "--agents", "8", "--pages", "4", "--page-size", "8", "--seed", "1", "--trace", trace.to_str().unwrap()]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}{}", stderr(&o));
    assert!(out.contains("max abs error:"));
    assert!(out.contains("verdict: PASS"));
    assert!(std::fs::metadata(&trace).unwrap().len() > 0);
}

#[test]
fn run_bfs_prints_validation_report() {
    let o = parobj(&["run", "bfs", "--agents", "4", "--vertices", "4096", "--degree", "16", "--seed", "7"]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}{}", stderr(&o));
    assert_eq!(out.lines().filter(|l| l.starts_with("check ") && l.ends_with(": pass")).count(), 4, "{out}");
    assert_eq!(line_value(&out, "levels match oracle: "), "yes");
}

#[test]
fn unknown_app_is_a_usage_error() {
    let o = parobj(&["run", "nosuchapp"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn bad_flags_and_settings_are_usage_errors() {
    for args in [
        &["run", "mapreduce", "--agents", "0"][..],
        &["run", "mapreduce", "--set", "colour=blue"],
        &["run", "mapreduce", "--processes"],
        &["run", "fft3d", "--pages", "4", "--cpus", "3"],
        &["run", "bfs", "--vertices", "10", "--root", "10"],
        &["run", "broadcast", "--arrays", "1"],
        &["run", "mapreduce", "--fuzz", "9:1"],
    ] {
        let o = parobj(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert_eq!(stderr(&o).lines().count(), 1, "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# small run\nagents = 3\nworkers=17\nseed=5\n").unwrap();
    let o = parobj(&["run", "mapreduce", "--config", cfg.to_str().unwrap(), "--workers", "9"]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}{}", stderr(&o));
    assert!(out.starts_with("cluster: 3 agents"), "{out}");
    assert!(out.contains("seed 5"));
    assert!(out.contains("mapreduce: 9 workers"), "{out}");
}

#[test]
fn bfs_reads_an_edge_list() {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("g.txt");
    std::fs::write(&edges, "0 1\n1 2\n2 3\n# isolated 4\n4 4\n").unwrap();
    let o = parobj(&["run", "bfs", "--agents", "2", "--edges", edges.to_str().unwrap()]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}{}", stderr(&o));
    assert!(out.contains("iterations: 4  reached: 4"), "{out}");
}

#[test]
fn full_scale_is_described_not_run() {
    let o = parobj(&["run", "fft3d", "--full-scale"]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0));
    assert!(out.contains("16384^3") && out.contains("not executed"), "{out}");
}

#[test]
fn same_seed_same_result_across_runs_and_transports() {
    let result = |extra: &[&str]| {
        let mut args = vec!["run", "mapreduce", "--agents", "4", "--workers", "300", "--seed", "11", "--fuzz", "0:100"];
        args.extend_from_slice(extra);
        let o = parobj(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        line_value(&stdout(&o), "total: ").to_string()
    };
    let first = result(&[]);
    assert_eq!(result(&[]), first);
    assert_eq!(result(&["--transport", "tcp"]), first);
    assert_eq!(result(&["--transport", "tcp", "--processes"]), first);
    assert_eq!(result(&["--mode", "seq"]), first);
}

fn broadcast_trace(dir: &Path) -> std::path::PathBuf {
    let trace = dir.join("b.jsonl");
    let o = parobj(&["run", "broadcast", "--agents", "8", "--arrays", "64", "--trace", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    trace
}

#[test]
fn analyze_reports_broadcast_and_json_matches() {
    let dir = tempfile::tempdir().unwrap();
    let trace = broadcast_trace(dir.path());
    let json = dir.path().join("s.json");
    let o = parobj(&["analyze", trace.to_str().unwrap(), "--json", json.to_str().unwrap()]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}{}", stderr(&o));
    assert_eq!(line_value(&out, "broadcast groups (min fanout 2): "), "1");
    assert!(out.contains("fanout 64"), "{out}");

    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let totals = line_value(&out, "total messages: ");
    assert_eq!(totals, format!("{}  total bytes: {}", s["total_messages"], s["total_bytes"]));
    assert_eq!(line_value(&out, "bytes saved by aggregation: "), s["bytes_saved_total"].to_string());
    let groups = s["broadcast_groups"].as_array().unwrap();
    assert_eq!(groups.len(), 1);
    assert_eq!(groups[0]["destinations"].as_array().unwrap().len(), 64);
    let matrix_sum: u64 = s["matrix"].as_array().unwrap().iter().map(|c| c["messages"].as_u64().unwrap()).sum();
    assert_eq!(matrix_sum, s["wire_records"].as_u64().unwrap());

    let o = parobj(&["analyze", trace.to_str().unwrap(), "--min-fanout", "65"]);
    assert_eq!(line_value(&stdout(&o), "broadcast groups (min fanout 65): "), "0");
}

#[test]
fn analyze_rejects_empty_and_inconsistent_traces() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let o = parobj(&["analyze", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("empty"));

    let trace = broadcast_trace(dir.path());
    let text = std::fs::read_to_string(&trace).unwrap();
    // Drop one record of agent 2 to open a seq gap.
    let victim = text.lines().position(|l| l.contains("\"agent\":2") || l.contains("\"src\":2")).unwrap();
    let gapped: Vec<&str> = text.lines().enumerate().filter(|(i, _)| *i != victim + 1).map(|(_, l)| l).collect();
    let bad = dir.path().join("gap.jsonl");
    std::fs::write(&bad, gapped.join("\n")).unwrap();
    let o = parobj(&["analyze", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seq gap"), "{}", stderr(&o));

    let o = parobj(&["analyze", dir.path().join("missing.jsonl").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn launch_on_a_taken_endpoint_fails() {
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let o = parobj(&["launch", "--agent", "2", "--registry", "127.0.0.1:1", "--listen", &addr]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert_eq!(stderr(&o).lines().count(), 1);
    let o = parobj(&["launch", "--agent", "1", "--registry", "127.0.0.1:1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[cfg(unix)]
#[test]
fn launch_stops_cleanly_on_sigterm() {
    let registry = RegistryServer::bind("127.0.0.1:0").unwrap();
    let reg_addr = registry.local_addr().to_string();
    let driver = TcpListener::bind("127.0.0.1:0").unwrap();
    let driver_addr = AgentAddress { agent: AgentId(1), endpoint: driver.local_addr().unwrap().to_string() };
    let mut child = Command::new(BIN)
        .args(["launch", "--agent", "2", "--registry", &reg_addr])
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let session = registry.gather(&[AgentId(2)], vec![driver_addr], Duration::from_secs(20)).unwrap();
    assert_eq!(session.peers().len(), 2);
    let killed = Command::new("kill").args(["-TERM", &child.id().to_string()]).status().unwrap();
    assert!(killed.success());
    let deadline = Instant::now() + Duration::from_secs(20);
    let status = loop {
        if let Some(s) = child.try_wait().unwrap() {
            break s;
        }
        assert!(Instant::now() < deadline, "agent did not stop");
        std::thread::sleep(Duration::from_millis(20));
    };
    assert_eq!(status.code(), Some(0));
    // The final report still reaches the registry.
    let reports = session.shutdown(Duration::from_secs(5));
    assert_eq!(reports.len(), 1);
    assert!(reports[0].1.is_ok(), "{:?}", reports[0].1);
}
