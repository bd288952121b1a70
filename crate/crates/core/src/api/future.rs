//! Implicit futures.
//!
//! A [`Future`] is a guard plus an optional result slot on the issuing
//! agent. Reading it waits for the guard's release, then decodes the slot.
//! The outcome is cached, so every later read sees the same value.

use super::RemoteError;
use crate::runtime::guard::{GuardCell, SlotCell};
use crate::runtime::outcome::{self, ErrorCode, ErrorPayload};
use crate::runtime::pool::block_on;
use crate::runtime::trace::{EventKind, TraceEvent};
use crate::runtime::AgentCore;
use crate::value::{from_bytes, CodecError};
use crate::wire::GuardRef;
use serde::de::DeserializeOwned;
use std::fmt;
use std::sync::{Arc, OnceLock};

pub(crate) type Writeback = Box<dyn Fn(&[u8]) -> Result<(), CodecError> + Send + Sync>;

/// A by-reference argument awaiting its written-back value: slot id, cell, apply.
pub(crate) type PendingWriteback = (u64, Arc<SlotCell>, Writeback);

pub(crate) struct Issued {
    pub core: Arc<AgentCore>,
    pub guard: GuardRef,
    pub cell: Arc<GuardCell>,
    pub slot: Option<(u64, Arc<SlotCell>)>,
    pub writebacks: Vec<PendingWriteback>,
}

/// Settlement state shared by all copies of a future.
pub(crate) struct Pending {
    issued: Option<Issued>,
    outcome: OnceLock<Result<Vec<u8>, RemoteError>>,
}

impl Pending {
    pub fn new(issued: Issued) -> Arc<Pending> {
        Arc::new(Pending { issued: Some(issued), outcome: OnceLock::new() })
    }

    pub fn failed(err: RemoteError) -> Arc<Pending> {
        let outcome = OnceLock::new();
        let _ = outcome.set(Err(err));
        Arc::new(Pending { issued: None, outcome })
    }

    pub fn guard(&self) -> Option<GuardRef> {
        self.issued.as_ref().map(|i| i.guard)
    }

    pub fn is_released(&self) -> bool {
        match &self.issued {
            Some(i) => i.cell.is_released(),
            None => true,
        }
    }

    /// True once the outcome is known to be a success.
    pub fn settled_ok(&self) -> bool {
        matches!(self.outcome.get(), Some(Ok(_)))
    }

    /// Waits for the guard and returns the (cached) raw outcome.
    pub fn resolve(&self) -> &Result<Vec<u8>, RemoteError> {
        let Some(iss) = &self.issued else {
            return self.outcome.get().expect("failed futures carry their outcome");
        };
        let mut begin = TraceEvent::new(EventKind::WaitBegin);
        begin.guard = Some(iss.guard);
        iss.core.trace.event(begin);
        let released = iss.cell.is_released() || block_on(|| iss.cell.wait(iss.core.wait_timeout));
        if !released {
            let timeout = iss.core.wait_timeout.unwrap_or_default();
            return self.outcome.get_or_init(|| {
                iss.core.fault(format!("wait on {:?} timed out after {timeout:?}", iss.guard));
                Err(RemoteError::Timeout { guard: iss.guard, timeout })
            });
        }
        let mut end = TraceEvent::new(EventKind::WaitEnd);
        end.guard = Some(iss.guard);
        iss.core.trace.event(end);
        self.outcome.get_or_init(|| collect(iss))
    }
}

fn collect(iss: &Issued) -> Result<Vec<u8>, RemoteError> {
    let value = match &iss.slot {
        None => Vec::new(),
        Some((_, cell)) => {
            let payload = cell.get().ok_or_else(|| {
                RemoteError::Remote(ErrorPayload {
                    code: ErrorCode::Codec,
                    message: format!("guard {:?} released without a result", iss.guard),
                })
            })?;
            match outcome::decode(&payload) {
                Ok(v) => v.to_vec(),
                Err(e) => {
                    for (id, _, _) in &iss.writebacks {
                        iss.core.guards.forget_slot(*id);
                    }
                    return Err(RemoteError::Remote(e));
                }
            }
        }
    };
    for (id, cell, apply) in &iss.writebacks {
        match cell.get() {
            Some(bytes) => apply(&bytes).map_err(|e| RemoteError::Codec(e.0))?,
            None => iss.core.guards.forget_slot(*id),
        }
    }
    Ok(value)
}

type Conv<T> = Arc<dyn Fn(&[u8]) -> Result<T, RemoteError> + Send + Sync>;

/// Handle to the result of a remote operation.
pub struct Future<T> {
    pending: Arc<Pending>,
    conv: Conv<T>,
}

impl<T> Clone for Future<T> {
    fn clone(&self) -> Self {
        Future { pending: self.pending.clone(), conv: self.conv.clone() }
    }
}

impl<T> fmt::Debug for Future<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Future")
            .field("guard", &self.pending.guard())
            .field("released", &self.pending.is_released())
            .finish()
    }
}

pub(crate) fn decode_conv<T: DeserializeOwned>() -> Conv<T> {
    Arc::new(|b| from_bytes(b).map_err(|e| RemoteError::Codec(e.0)))
}

impl<T: 'static> Future<T> {
    pub(crate) fn from_parts(pending: Arc<Pending>, conv: Conv<T>) -> Self {
        Future { pending, conv }
    }

    /// A future that is already settled with an error.
    pub fn failed(err: RemoteError) -> Self {
        Future { pending: Pending::failed(err), conv: Arc::new(|_| unreachable!("failed futures never decode")) }
    }

    /// Waits for the release and decodes the value.
    pub fn get(&self) -> Result<T, RemoteError> {
        match self.pending.resolve() {
            Ok(bytes) => (self.conv)(bytes),
            Err(e) => Err(e.clone()),
        }
    }

    /// Waits for the release without decoding.
    pub fn wait(&self) -> Result<(), RemoteError> {
        self.pending.resolve().as_ref().map(|_| ()).map_err(Clone::clone)
    }

    /// True once the guard has been released.
    pub fn is_ready(&self) -> bool {
        self.pending.is_released()
    }

    pub fn guard(&self) -> Option<GuardRef> {
        self.pending.guard()
    }

    pub fn map<U: 'static>(self, f: impl Fn(T) -> U + Send + Sync + 'static) -> Future<U> {
        let conv = self.conv;
        Future { pending: self.pending, conv: Arc::new(move |b| conv(b).map(&f)) }
    }

    pub(crate) fn pending(&self) -> &Arc<Pending> {
        &self.pending
    }
}
