use super::{AgentAddress, Endpoint, InboxItem, TransportError};
use crate::wire::{encode_frame, read_frame, AgentId};
use crossbeam_channel::{unbounded, Receiver, Sender};
use parking_lot::Mutex;
use std::collections::HashMap;
use std::io::{BufReader, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

/// TCP endpoint. Each ordered pair of agents gets its own connection, opened
/// lazily by the sender; the first 8 bytes on a connection carry the
/// sender's agent id, followed by length-prefixed frames.
pub struct TcpEndpoint {
    id: AgentId,
    local: SocketAddr,
    connect_timeout: Duration,
    inbox_tx: Sender<InboxItem>,
    inbox_rx: Receiver<InboxItem>,
    peers: Mutex<HashMap<AgentId, SocketAddr>>,
    outgoing: Mutex<HashMap<AgentId, Arc<Mutex<TcpStream>>>>,
    incoming: Arc<Mutex<Vec<TcpStream>>>,
    stopped: Arc<AtomicBool>,
}

impl TcpEndpoint {
    pub fn bind(id: AgentId, listen: &str, connect_timeout: Duration) -> Result<Arc<TcpEndpoint>, TransportError> {
        let bind_err = |source| TransportError::Bind { agent: id, endpoint: listen.to_string(), source };
        let listener = TcpListener::bind(listen).map_err(bind_err)?;
        let local = listener.local_addr().map_err(bind_err)?;
        let (inbox_tx, inbox_rx) = unbounded();
        let endpoint = Arc::new(TcpEndpoint {
            id,
            local,
            connect_timeout,
            inbox_tx: inbox_tx.clone(),
            inbox_rx,
            peers: Mutex::new(HashMap::new()),
            outgoing: Mutex::new(HashMap::new()),
            incoming: Arc::new(Mutex::new(Vec::new())),
            stopped: Arc::new(AtomicBool::new(false)),
        });
        let stopped = endpoint.stopped.clone();
        let incoming = endpoint.incoming.clone();
        thread::Builder::new()
            .name(format!("tcp-accept-{}", id.0))
            .spawn(move || accept_loop(listener, inbox_tx, incoming, stopped))
            .map_err(bind_err)?;
        Ok(endpoint)
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local
    }

    /// Installs the address table. Endpoints that fail to parse are rejected.
    pub fn set_peers(&self, peers: &[AgentAddress]) -> Result<(), String> {
        let mut table = self.peers.lock();
        for p in peers {
            let addr = p
                .endpoint
                .to_socket_addrs()
                .map_err(|e| format!("bad endpoint {} for {}: {e}", p.endpoint, p.agent))?
                .next()
                .ok_or_else(|| format!("endpoint {} for {} resolves to nothing", p.endpoint, p.agent))?;
            table.insert(p.agent, addr);
        }
        Ok(())
    }

    fn connection(&self, dst: AgentId) -> Result<Arc<Mutex<TcpStream>>, TransportError> {
        let mut outgoing = self.outgoing.lock();
        if let Some(c) = outgoing.get(&dst) {
            return Ok(c.clone());
        }
        let addr = *self.peers.lock().get(&dst).ok_or(TransportError::UnknownDestination(dst))?;
        let connect_err = |source| TransportError::Connect { agent: dst, endpoint: addr.to_string(), source };
        let mut stream = TcpStream::connect_timeout(&addr, self.connect_timeout).map_err(connect_err)?;
        stream.set_nodelay(true).map_err(connect_err)?;
        stream.set_write_timeout(Some(self.connect_timeout)).map_err(connect_err)?;
        stream.write_all(&self.id.0.to_le_bytes()).map_err(connect_err)?;
        let conn = Arc::new(Mutex::new(stream));
        outgoing.insert(dst, conn.clone());
        Ok(conn)
    }
}

fn accept_loop(
    listener: TcpListener,
    inbox: Sender<InboxItem>,
    incoming: Arc<Mutex<Vec<TcpStream>>>,
    stopped: Arc<AtomicBool>,
) {
    for stream in listener.incoming() {
        if stopped.load(Ordering::Acquire) {
            break;
        }
        let Ok(mut stream) = stream else { continue };
        let mut hello = [0u8; 8];
        if stream.read_exact(&mut hello).is_err() {
            continue;
        }
        let src = AgentId(u64::from_le_bytes(hello));
        if let Ok(clone) = stream.try_clone() {
            incoming.lock().push(clone);
        }
        let inbox = inbox.clone();
        let _ = thread::Builder::new().name(format!("tcp-read-{}", src.0)).spawn(move || {
            let mut reader = BufReader::with_capacity(64 * 1024, stream);
            loop {
                match read_frame(&mut reader) {
                    Ok(Some(payload)) => {
                        if inbox.send(InboxItem::Frame(src, payload)).is_err() {
                            break;
                        }
                    }
                    Ok(None) => break,
                    Err(e) => {
                        log::warn!("connection from {src} dropped: {e}");
                        break;
                    }
                }
            }
        });
    }
}

impl Endpoint for TcpEndpoint {
    fn agent(&self) -> AgentId {
        self.id
    }

    fn address(&self) -> AgentAddress {
        AgentAddress { agent: self.id, endpoint: self.local.to_string() }
    }

    fn send_frame(&self, dst: AgentId, payload: Vec<u8>) -> Result<(), TransportError> {
        if self.stopped.load(Ordering::Acquire) {
            return Err(TransportError::Closed(self.id));
        }
        if dst == self.id {
            return self
                .inbox_tx
                .send(InboxItem::Frame(self.id, payload))
                .map_err(|_| TransportError::Closed(dst));
        }
        let conn = self.connection(dst)?;
        let frame = encode_frame(&payload);
        let result = conn.lock().write_all(&frame);
        result.map_err(|source| {
            self.outgoing.lock().remove(&dst);
            TransportError::Send { agent: dst, source }
        })
    }

    fn recv_frame(&self) -> Option<(AgentId, Vec<u8>)> {
        match self.inbox_rx.recv() {
            Ok(InboxItem::Frame(src, payload)) => Some((src, payload)),
            Ok(InboxItem::Shutdown) | Err(_) => None,
        }
    }

    fn shutdown(&self) {
        if self.stopped.swap(true, Ordering::AcqRel) {
            return;
        }
        // Wake the accept loop so it observes the stop flag.
        let _ = TcpStream::connect_timeout(&self.local, Duration::from_millis(200));
        for (_, conn) in self.outgoing.lock().drain() {
            let _ = conn.lock().shutdown(Shutdown::Both);
        }
        for stream in self.incoming.lock().drain(..) {
            let _ = stream.shutdown(Shutdown::Both);
        }
        let _ = self.inbox_tx.send(InboxItem::Shutdown);
    }
}
