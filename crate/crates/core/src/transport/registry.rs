//! Address registry for multi-process clusters.
//!
//! The launcher plays the role of agent 0: every agent process connects to
//! the registry, announces its endpoint, and receives the full address table
//! once all agents have registered. The connection stays open for the life
//! of the run; a `shutdown` message (or EOF) stops the agent, which answers
//! with a `final` message carrying its trace.

use super::{AgentAddress, TransportError};
use crate::wire::{read_frame, write_frame, AgentId};
use serde::{Deserialize, Serialize};
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "msg", rename_all = "snake_case")]
pub enum RegistryMsg {
    Register { address: AgentAddress },
    Peers { peers: Vec<AgentAddress> },
    Shutdown,
    Final { trace: String, faults: Vec<String> },
}

fn send(stream: &mut TcpStream, msg: &RegistryMsg) -> io::Result<()> {
    let bytes = serde_json::to_vec(msg).expect("registry messages serialize");
    write_frame(stream, &bytes)
}

fn recv(stream: &mut TcpStream) -> Result<Option<RegistryMsg>, TransportError> {
    match read_frame(stream) {
        Ok(Some(bytes)) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| TransportError::Registry(format!("bad registry message: {e}"))),
        Ok(None) => Ok(None),
        Err(e) => Err(TransportError::Registry(e.to_string())),
    }
}

pub struct RegistryServer {
    listener: TcpListener,
}

impl RegistryServer {
    pub fn bind(addr: &str) -> Result<Self, TransportError> {
        let listener = TcpListener::bind(addr).map_err(|source| TransportError::Bind {
            agent: AgentId::REGISTRY,
            endpoint: addr.to_string(),
            source,
        })?;
        Ok(RegistryServer { listener })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    /// Waits for `expected` remote registrations, then publishes the table
    /// (remote registrations plus `local`) to every remote member.
    pub fn gather(
        self,
        expected: &[AgentId],
        local: Vec<AgentAddress>,
        timeout: Duration,
    ) -> Result<RegistrySession, TransportError> {
        self.listener.set_nonblocking(true).map_err(|e| TransportError::Registry(e.to_string()))?;
        let deadline = Instant::now() + timeout;
        let mut members: Vec<(AgentId, TcpStream)> = Vec::new();
        let mut peers = local;
        while members.len() < expected.len() {
            match self.listener.accept() {
                Ok((mut stream, _)) => {
                    stream.set_nonblocking(false).map_err(|e| TransportError::Registry(e.to_string()))?;
                    stream.set_read_timeout(Some(timeout)).ok();
                    match recv(&mut stream)? {
                        Some(RegistryMsg::Register { address }) => {
                            if !expected.contains(&address.agent)
                                || members.iter().any(|(id, _)| *id == address.agent)
                            {
                                return Err(TransportError::Registry(format!(
                                    "unexpected registration from {}",
                                    address.agent
                                )));
                            }
                            stream.set_read_timeout(None).ok();
                            members.push((address.agent, stream));
                            peers.push(address);
                        }
                        other => {
                            return Err(TransportError::Registry(format!("expected register, got {other:?}")))
                        }
                    }
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    if Instant::now() > deadline {
                        let missing: Vec<String> = expected
                            .iter()
                            .filter(|id| !members.iter().any(|(m, _)| m == *id))
                            .map(|id| id.to_string())
                            .collect();
                        return Err(TransportError::Registry(format!(
                            "timed out waiting for {}",
                            missing.join(", ")
                        )));
                    }
                    thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(TransportError::Registry(e.to_string())),
            }
        }
        peers.sort_by_key(|p| p.agent);
        let table = RegistryMsg::Peers { peers: peers.clone() };
        for (id, stream) in &mut members {
            send(stream, &table).map_err(|e| TransportError::Registry(format!("publishing to {id}: {e}")))?;
        }
        Ok(RegistrySession { members, peers })
    }
}

pub struct RegistrySession {
    members: Vec<(AgentId, TcpStream)>,
    peers: Vec<AgentAddress>,
}

/// What a remote agent reported when it was shut down.
#[derive(Debug, Clone, Default)]
pub struct FinalReport {
    pub trace: String,
    pub faults: Vec<String>,
}

impl RegistrySession {
    pub fn peers(&self) -> &[AgentAddress] {
        &self.peers
    }

    /// Tells every remote agent to stop and collects their final reports.
    pub fn shutdown(self, timeout: Duration) -> Vec<(AgentId, Result<FinalReport, TransportError>)> {
        let mut out = Vec::new();
        let mut members = self.members;
        for (_, stream) in &mut members {
            let _ = send(stream, &RegistryMsg::Shutdown);
        }
        for (id, mut stream) in members {
            stream.set_read_timeout(Some(timeout)).ok();
            let report = match recv(&mut stream) {
                Ok(Some(RegistryMsg::Final { trace, faults })) => Ok(FinalReport { trace, faults }),
                Ok(other) => Err(TransportError::Registry(format!("expected final report, got {other:?}"))),
                Err(e) => Err(e),
            };
            out.push((id, report));
        }
        out
    }
}

pub struct RegistryClient {
    stream: TcpStream,
}

impl RegistryClient {
    pub fn register(
        registry: &str,
        me: AgentAddress,
        timeout: Duration,
    ) -> Result<(RegistryClient, Vec<AgentAddress>), TransportError> {
        let addr = registry
            .to_socket_addrs()
            .ok()
            .and_then(|mut a| a.next())
            .ok_or_else(|| TransportError::Registry(format!("cannot resolve registry {registry}")))?;
        let mut stream = TcpStream::connect_timeout(&addr, timeout).map_err(|source| TransportError::Connect {
            agent: AgentId::REGISTRY,
            endpoint: registry.to_string(),
            source,
        })?;
        send(&mut stream, &RegistryMsg::Register { address: me })
            .map_err(|e| TransportError::Registry(e.to_string()))?;
        match recv(&mut stream)? {
            Some(RegistryMsg::Peers { peers }) => Ok((RegistryClient { stream }, peers)),
            other => Err(TransportError::Registry(format!("expected peers, got {other:?}"))),
        }
    }

    /// Blocks until the registry asks for shutdown or goes away.
    pub fn wait_shutdown(&mut self) -> Result<(), TransportError> {
        loop {
            match recv(&mut self.stream)? {
                Some(RegistryMsg::Shutdown) | None => return Ok(()),
                Some(other) => log::warn!("ignoring registry message {other:?}"),
            }
        }
    }

    pub fn try_clone(&self) -> io::Result<RegistryClient> {
        Ok(RegistryClient { stream: self.stream.try_clone()? })
    }

    pub fn send_final(&mut self, report: FinalReport) -> Result<(), TransportError> {
        send(&mut self.stream, &RegistryMsg::Final { trace: report.trace, faults: report.faults })
            .map_err(|e| TransportError::Registry(e.to_string()))
    }
}
