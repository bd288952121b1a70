use super::{AgentAddress, Endpoint, InboxItem, TransportError};
use crate::wire::AgentId;
use crossbeam_channel::{unbounded, Receiver, Sender};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

struct Mailbox {
    tx: Sender<InboxItem>,
    closed: AtomicBool,
}

/// Shared mailbox table of an in-process cluster.
pub struct InProcNetwork {
    boxes: Vec<Mailbox>,
}

impl InProcNetwork {
    #[allow(clippy::new_ret_no_self)]
    pub fn new(n: usize) -> Vec<InProcEndpoint> {
        let mut boxes = Vec::with_capacity(n);
        let mut receivers = Vec::with_capacity(n);
        for _ in 0..n {
            let (tx, rx) = unbounded();
            boxes.push(Mailbox { tx, closed: AtomicBool::new(false) });
            receivers.push(rx);
        }
        let net = Arc::new(InProcNetwork { boxes });
        receivers
            .into_iter()
            .enumerate()
            .map(|(i, rx)| InProcEndpoint { id: AgentId(i as u64 + 1), net: net.clone(), rx })
            .collect()
    }

    fn mailbox(&self, id: AgentId) -> Option<&Mailbox> {
        if id.0 == 0 {
            return None;
        }
        self.boxes.get(id.0 as usize - 1)
    }
}

pub struct InProcEndpoint {
    id: AgentId,
    net: Arc<InProcNetwork>,
    rx: Receiver<InboxItem>,
}

impl Endpoint for InProcEndpoint {
    fn agent(&self) -> AgentId {
        self.id
    }

    fn address(&self) -> AgentAddress {
        AgentAddress { agent: self.id, endpoint: format!("inproc:{}", self.id.0) }
    }

    fn send_frame(&self, dst: AgentId, payload: Vec<u8>) -> Result<(), TransportError> {
        let mailbox = self.net.mailbox(dst).ok_or(TransportError::UnknownDestination(dst))?;
        if mailbox.closed.load(Ordering::Acquire) {
            return Err(TransportError::Closed(dst));
        }
        mailbox
            .tx
            .send(InboxItem::Frame(self.id, payload))
            .map_err(|_| TransportError::Closed(dst))
    }

    fn recv_frame(&self) -> Option<(AgentId, Vec<u8>)> {
        match self.rx.recv() {
            Ok(InboxItem::Frame(src, payload)) => Some((src, payload)),
            Ok(InboxItem::Shutdown) | Err(_) => None,
        }
    }

    fn shutdown(&self) {
        if let Some(mailbox) = self.net.mailbox(self.id) {
            mailbox.closed.store(true, Ordering::Release);
            let _ = mailbox.tx.send(InboxItem::Shutdown);
        }
    }
}
