use clap::{Args, Parser, Subcommand, ValueEnum};
use parobj_core::api::ExecMode;
use parobj_core::apps::fft::{FftInput, ReadVariant};
use parobj_core::transport::TransportKind;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "parobj", version, about = "Run distributed-object apps, launch agents and analyze traces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Start a cluster, run an app on it and verify the result.
    Run(RunArgs),
    /// Summarize a trace: traffic matrix and broadcast groups.
    Analyze(AnalyzeArgs),
    /// Serve as one standalone tcp agent that joins a registry.
    Launch(LaunchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AppName {
    Mapreduce,
    Bfs,
    Fft3d,
    Broadcast,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    pub app: AppName,

    /// Number of agents, including the driver agent 1.
    #[arg(long)]
    pub agents: Option<usize>,
    /// inproc or tcp.
    #[arg(long)]
    pub transport: Option<TransportKind>,
    /// causal or seq.
    #[arg(long)]
    pub mode: Option<ExecMode>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the merged JSON-lines trace here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Delay injected before every send and execution, `MIN:MAX`
    /// microseconds.
    #[arg(long)]
    pub fuzz: Option<String>,
    /// Plain `key=value` file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra runtime setting, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Run agents 2..N as separate `parobj launch` processes (tcp only).
    #[arg(long)]
    pub processes: bool,

    /// mapreduce: number of workers (and input values).
    #[arg(long)]
    pub workers: Option<usize>,

    /// bfs: vertices of the generated graph.
    #[arg(long)]
    pub vertices: Option<usize>,
    /// bfs: mean degree of the generated graph.
    #[arg(long)]
    pub degree: Option<f64>,
    /// bfs: graph partitions (default: one per agent).
    #[arg(long)]
    pub parts: Option<usize>,
    #[arg(long)]
    pub root: Option<u32>,
    /// bfs: read the graph from a "u v" edge-list file instead.
    #[arg(long)]
    pub edges: Option<PathBuf>,

    /// fft3d: pages per dimension.
    #[arg(long)]
    pub pages: Option<usize>,
    /// fft3d: elements per page dimension.
    #[arg(long)]
    pub page_size: Option<usize>,
    /// fft3d: virtual device hosts holding pages.
    #[arg(long)]
    pub devices: Option<usize>,
    /// fft3d: virtual cpu hosts running slab transforms.
    #[arg(long)]
    pub cpus: Option<usize>,
    /// fft3d: device or reader.
    #[arg(long)]
    pub variant: Option<ReadVariant>,
    /// fft3d: random, zeros or delta.
    #[arg(long)]
    pub input: Option<FftInput>,
    /// fft3d: print the full-size configuration and exit without running.
    #[arg(long)]
    pub full_scale: bool,

    /// broadcast: number of remote arrays.
    #[arg(long)]
    pub arrays: Option<usize>,
    /// broadcast: doubles per array.
    #[arg(long)]
    pub len: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// JSON-lines trace written by `run --trace`.
    pub trace: PathBuf,
    /// Also write the summary as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub min_fanout: usize,
}

#[derive(Debug, Clone, Args)]
pub struct LaunchArgs {
    /// Id of this agent (2 or more; 1 is the driver).
    #[arg(long)]
    pub agent: u64,
    /// Registry address printed by the driver.
    #[arg(long)]
    pub registry: String,
    /// Endpoint to bind.
    #[arg(long, default_value = "127.0.0.1:0")]
    pub listen: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mode: Option<ExecMode>,
    #[arg(long)]
    pub fuzz: Option<String>,
    /// Extra runtime setting, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}
