//! Cluster lifecycle: start agents, run the application on agent 1, stop,
//! and collect traces.

use super::agent::{start_agent, AgentHandle, ClusterShared};
use super::config::{ClusterConfig, ConfigError, RuntimeConfig};
use super::kind::KindRegistry;
use super::pool::PoolStats;
use super::trace::{to_json_lines, TraceRecord};
use super::HostDirectory;
use crate::api::{Ctx, ExecMode, ModeCell, ModeError, RemoteError};
use crate::transport::registry::{FinalReport, RegistryClient, RegistryServer, RegistrySession};
use crate::transport::{connect_local, AgentAddress, Endpoint, TcpEndpoint, TransportError, TransportKind};
use crate::wire::{AgentId, Envelope};
use crossbeam_channel::{select, unbounded, Receiver};
use parking_lot::Mutex;
use std::collections::BTreeMap;
use std::io;
use std::process::Child;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mode(#[from] ModeError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("cannot start {agent}: {source}")]
    Startup { agent: AgentId, source: io::Error },
}

/// Everything a stopped cluster leaves behind.
#[derive(Debug, Default)]
pub struct ClusterReport {
    /// Trace records of every agent, grouped by agent in id order.
    pub records: Vec<TraceRecord>,
    /// Protocol faults and other flagged conditions.
    pub faults: Vec<String>,
}

struct RemoteMembers {
    session: RegistrySession,
    children: Vec<Child>,
}

/// A running cluster as seen from the driver process.
pub struct Cluster {
    agents: Vec<AgentHandle>,
    shared: Arc<ClusterShared>,
    remote: Option<RemoteMembers>,
}

/// Starts `n` agents with the given transport and `key=value` settings.
pub fn spawn_cluster(
    n: usize,
    kind: TransportKind,
    settings: &BTreeMap<String, String>,
    kinds: KindRegistry,
) -> Result<Cluster, ClusterError> {
    let mut config = ClusterConfig::new(n, kind);
    config.apply(settings)?;
    Cluster::spawn(config, kinds)
}

impl Cluster {
    /// Starts every agent inside this process.
    pub fn spawn(config: ClusterConfig, kinds: KindRegistry) -> Result<Cluster, ClusterError> {
        config.validate()?;
        let endpoints = connect_local(config.agents, config.transport, &config.net)?;
        let addresses: Vec<AgentAddress> = endpoints.iter().map(|e| e.address()).collect();
        let shared = Arc::new(ClusterShared {
            hosts: Some(Mutex::new(HostDirectory::new(addresses.clone(), config.runtime.host_capacity))),
            addresses,
            mode: ModeCell::new(config.runtime.mode),
        });
        let kinds = Arc::new(kinds);
        let mut agents = Vec::with_capacity(endpoints.len());
        for e in endpoints {
            let agent = e.agent();
            agents.push(
                start_agent(e, kinds.clone(), shared.clone(), &config.runtime)
                    .map_err(|source| ClusterError::Startup { agent, source })?,
            );
        }
        Ok(Cluster { agents, shared, remote: None })
    }

    /// Starts agent 1 in this process and agents `2..=n` as separate
    /// processes via `launcher(agent, registry_address)`. The launched
    /// processes register with this process, which plays the registry.
    pub fn spawn_with_processes(
        config: ClusterConfig,
        kinds: KindRegistry,
        mut launcher: impl FnMut(AgentId, &str) -> io::Result<Child>,
    ) -> Result<Cluster, ClusterError> {
        config.validate()?;
        let registry = RegistryServer::bind("127.0.0.1:0")?;
        let registry_addr = registry.local_addr().to_string();
        let driver = TcpEndpoint::bind(AgentId(1), &config.net.listen, config.net.connect_timeout)?;
        let mut children = Vec::new();
        let expected: Vec<AgentId> = (2..=config.agents as u64).map(AgentId).collect();
        for &id in &expected {
            match launcher(id, &registry_addr) {
                Ok(child) => children.push(child),
                Err(source) => {
                    kill_all(&mut children);
                    return Err(ClusterError::Startup { agent: id, source });
                }
            }
        }
        let gather_timeout = Duration::from_secs(30).max(config.net.connect_timeout);
        let session = match registry.gather(&expected, vec![driver.address()], gather_timeout) {
            Ok(s) => s,
            Err(e) => {
                kill_all(&mut children);
                return Err(e.into());
            }
        };
        let addresses = session.peers().to_vec();
        driver.set_peers(&addresses).map_err(TransportError::Registry)?;
        let shared = Arc::new(ClusterShared {
            hosts: Some(Mutex::new(HostDirectory::new(addresses.clone(), config.runtime.host_capacity))),
            addresses,
            mode: ModeCell::new(config.runtime.mode),
        });
        let handle = start_agent(driver, Arc::new(kinds), shared.clone(), &config.runtime)
            .map_err(|source| ClusterError::Startup { agent: AgentId(1), source })?;
        Ok(Cluster { agents: vec![handle], shared, remote: Some(RemoteMembers { session, children }) })
    }

    pub fn addresses(&self) -> &[AgentAddress] {
        &self.shared.addresses
    }

    pub fn len(&self) -> usize {
        self.shared.addresses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shared.addresses.is_empty()
    }

    pub fn mode(&self) -> ExecMode {
        self.shared.mode.get()
    }

    /// Selects the execution mode. Allowed once, before anything is issued.
    pub fn set_mode(&self, mode: ExecMode) -> Result<(), ModeError> {
        if self.remote.is_some() {
            return Err(ModeError::Fixed);
        }
        self.shared.mode.set(mode)
    }

    /// Runs `app` as the main activity on agent 1 and waits for everything
    /// it issued.
    pub fn run<R>(&self, app: impl FnOnce(&Ctx) -> R) -> Result<R, RemoteError> {
        let ctx = Ctx::new(self.agents[0].core.clone());
        let r = app(&ctx);
        ctx.drain()?;
        Ok(r)
    }

    /// Faults flagged so far by agents in this process.
    pub fn faults(&self) -> Vec<String> {
        self.agents.iter().flat_map(|a| a.core.faults()).collect()
    }

    /// Trace records so far of agents in this process.
    pub fn trace_snapshot(&self) -> Vec<TraceRecord> {
        self.agents.iter().flat_map(|a| a.core.trace.snapshot()).collect()
    }

    pub fn pool_stats(&self) -> Vec<(AgentId, PoolStats)> {
        self.agents.iter().map(|a| (a.core.id, a.core.pool_stats())).collect()
    }

    /// Guards issued by local agents and not yet released.
    pub fn outstanding_guards(&self) -> usize {
        self.agents.iter().map(|a| a.core.guards.outstanding_guards()).sum()
    }

    pub fn host_assignments(&self) -> Vec<(String, AgentAddress)> {
        self.shared.hosts.as_ref().map(|h| h.lock().assignments()).unwrap_or_default()
    }

    /// Sends a raw envelope from one of this process's agents. For protocol
    /// tests.
    #[doc(hidden)]
    pub fn inject(&self, env: Envelope) {
        let agent = self.agents.iter().find(|a| a.core.id == env.src).expect("injecting agent is local");
        agent.core.send(env, None);
    }

    /// Stops every agent and returns traces and faults.
    pub fn shutdown(mut self) -> ClusterReport {
        let mut report = ClusterReport::default();
        let mut remote_records = Vec::new();
        if let Some(mut remote) = self.remote.take() {
            for (id, r) in remote.session.shutdown(Duration::from_secs(30)) {
                match r {
                    Ok(FinalReport { trace, faults }) => {
                        report.faults.extend(faults);
                        for (n, line) in trace.lines().enumerate() {
                            match serde_json::from_str::<TraceRecord>(line) {
                                Ok(rec) => remote_records.push(rec),
                                Err(e) => report.faults.push(format!("{id}: unreadable trace line {n}: {e}")),
                            }
                        }
                    }
                    Err(e) => report.faults.push(format!("{id}: no final report: {e}")),
                }
            }
            wait_all(&mut remote.children, Duration::from_secs(10));
        }
        for a in &mut self.agents {
            a.stop();
        }
        for a in &self.agents {
            report.faults.extend(a.core.faults());
            report.records.extend(a.core.trace.take());
        }
        report.records.extend(remote_records);
        report.records.sort_by_key(|r| (r.agent(), r.seq()));
        report
    }
}

fn kill_all(children: &mut [Child]) {
    for c in children.iter_mut() {
        let _ = c.kill();
        let _ = c.wait();
    }
}

fn wait_all(children: &mut [Child], timeout: Duration) {
    let deadline = Instant::now() + timeout;
    for c in children.iter_mut() {
        loop {
            match c.try_wait() {
                Ok(Some(_)) => break,
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                _ => {
                    let _ = c.kill();
                    let _ = c.wait();
                    break;
                }
            }
        }
    }
}

/// Options of a standalone agent process.
#[derive(Debug, Clone)]
pub struct StandaloneOptions {
    pub agent: AgentId,
    pub listen: String,
    pub registry: String,
    pub connect_timeout: Duration,
    pub runtime: RuntimeConfig,
}

/// Runs one agent that joins a registry, serves until the registry asks it
/// to stop (or `stop` fires), then reports its trace.
pub fn run_standalone_agent(
    opts: StandaloneOptions,
    kinds: KindRegistry,
    stop: Receiver<()>,
) -> Result<Vec<String>, ClusterError> {
    if opts.agent.is_registry() {
        return Err(ConfigError("agent id 0 is reserved for the registry".into()).into());
    }
    let endpoint = TcpEndpoint::bind(opts.agent, &opts.listen, opts.connect_timeout)?;
    let (client, peers) = RegistryClient::register(&opts.registry, endpoint.address(), opts.connect_timeout)?;
    endpoint.set_peers(&peers).map_err(TransportError::Registry)?;
    let shared = Arc::new(ClusterShared { addresses: peers, hosts: None, mode: ModeCell::new(opts.runtime.mode) });
    let mut handle = start_agent(endpoint, Arc::new(kinds), shared, &opts.runtime)
        .map_err(|source| ClusterError::Startup { agent: opts.agent, source })?;
    let (done_tx, done_rx) = unbounded();
    let mut watcher = client.try_clone().map_err(|e| TransportError::Registry(e.to_string()))?;
    thread::spawn(move || {
        let _ = watcher.wait_shutdown();
        let _ = done_tx.send(());
    });
    select! {
        recv(done_rx) -> _ => {},
        recv(stop) -> _ => {},
    }
    handle.stop();
    let faults = handle.core.faults();
    let trace = to_json_lines(&handle.core.trace.take());
    let mut client = client;
    if let Err(e) = client.send_final(FinalReport { trace, faults: faults.clone() }) {
        log::info!("{}: registry gone before final report: {e}", opts.agent);
    }
    Ok(faults)
}
