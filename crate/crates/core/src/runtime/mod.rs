//! The virtual host: kinds, object and guard tables, worker pool, trace log
//! and cluster lifecycle.

mod agent;
pub mod builtin;
mod cluster;
mod config;
pub(crate) mod guard;
mod hosts;
mod kind;
pub mod outcome;
pub(crate) mod pool;
pub mod trace;

pub(crate) use agent::AgentCore;
pub use cluster::{run_standalone_agent, spawn_cluster, Cluster, ClusterError, ClusterReport, StandaloneOptions};
pub use config::{parse_fuzz, ClusterConfig, ConfigError, RuntimeConfig};
pub use guard::ProtocolError;
pub use hosts::HostDirectory;
pub use kind::{AppError, Args, KindBuilder, KindDescriptor, KindRegistry, RegistryError};
pub use outcome::{ErrorCode, ErrorPayload};
pub use pool::PoolStats;
