//! Frame transport between agents.
//!
//! Higher layers only see [`Endpoint`]: send a payload to an agent id, and
//! receive `(src, payload)` pairs in the owning agent's dispatcher. Both
//! implementations guarantee reliable, exactly-once delivery and FIFO order
//! per ordered `(src, dst)` pair; the guard protocol relies on the latter
//! (a `WriteResult` must arrive before the `ReleaseGuard` that follows it).

mod inproc;
pub mod registry;
mod tcp;

use crate::wire::AgentId;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;
use thiserror::Error;

pub use inproc::{InProcEndpoint, InProcNetwork};
pub use tcp::TcpEndpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    /// Mailboxes inside one process.
    InProc,
    /// Length-framed byte streams over TCP.
    Tcp,
}

impl FromStr for TransportKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inproc" => Ok(TransportKind::InProc),
            "tcp" => Ok(TransportKind::Tcp),
            other => Err(format!("unknown transport `{other}` (expected inproc or tcp)")),
        }
    }
}

impl fmt::Display for TransportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransportKind::InProc => "inproc",
            TransportKind::Tcp => "tcp",
        })
    }
}

/// Where an agent can be reached: an in-process mailbox key or `host:port`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentAddress {
    pub agent: AgentId,
    pub endpoint: String,
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("unknown destination {0}")]
    UnknownDestination(AgentId),
    #[error("destination {0} is closed")]
    Closed(AgentId),
    #[error("cannot connect to {agent} at {endpoint}: {source}")]
    Connect { agent: AgentId, endpoint: String, source: io::Error },
    #[error("send to {agent} failed: {source}")]
    Send { agent: AgentId, source: io::Error },
    #[error("cannot bind {endpoint} for {agent}: {source}")]
    Bind { agent: AgentId, endpoint: String, source: io::Error },
    #[error("registry: {0}")]
    Registry(String),
}

/// One agent's attachment to the cluster network.
pub trait Endpoint: Send + Sync {
    fn agent(&self) -> AgentId;

    fn address(&self) -> AgentAddress;

    /// Enqueues `payload` for `dst`. Returns once the frame is handed to the
    /// transport; delivery is asynchronous.
    fn send_frame(&self, dst: AgentId, payload: Vec<u8>) -> Result<(), TransportError>;

    /// Blocks until a frame arrives. `None` is the orderly termination signal
    /// after [`Endpoint::shutdown`].
    fn recv_frame(&self) -> Option<(AgentId, Vec<u8>)>;

    fn shutdown(&self);
}

#[derive(Debug, Clone)]
pub struct TransportConfig {
    /// Listen address for tcp endpoints; port 0 picks a free port.
    pub listen: String,
    pub connect_timeout: Duration,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig { listen: "127.0.0.1:0".into(), connect_timeout: Duration::from_millis(2000) }
    }
}

pub(crate) enum InboxItem {
    Frame(AgentId, Vec<u8>),
    Shutdown,
}

/// Builds `n` mutually reachable endpoints with ids `1..=n` inside this
/// process.
pub fn connect_local(
    n: usize,
    kind: TransportKind,
    config: &TransportConfig,
) -> Result<Vec<Arc<dyn Endpoint>>, TransportError> {
    match kind {
        TransportKind::InProc => Ok(InProcNetwork::new(n)
            .into_iter()
            .map(|e| Arc::new(e) as Arc<dyn Endpoint>)
            .collect()),
        TransportKind::Tcp => {
            let mut endpoints = Vec::with_capacity(n);
            for i in 1..=n as u64 {
                endpoints.push(TcpEndpoint::bind(AgentId(i), &config.listen, config.connect_timeout)?);
            }
            let peers: Vec<AgentAddress> = endpoints.iter().map(|e| e.address()).collect();
            for e in &endpoints {
                e.set_peers(&peers).map_err(TransportError::Registry)?;
            }
            Ok(endpoints.into_iter().map(|e| e as Arc<dyn Endpoint>).collect())
        }
    }
}
