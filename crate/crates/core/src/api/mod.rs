//! The programming surface: remote construction and invocation returning
//! implicit futures, scopes and barriers, execution modes and iteration
//! combinators.
//!
//! Every remote operation is issued through a [`Ctx`], which belongs to one
//! logical activity (the driver, a method executing on a worker, or a child
//! activity). Issued operations register in the innermost open scope.
//! A plain [`Ctx::scope`] hands its pending operations to the enclosing
//! scope; a [`Ctx::barrier`] waits for everything issued before it, runs its
//! body, and waits for everything issued inside it.

mod array;
mod future;
mod iter;
mod mode;

pub use array::RemoteArray;
pub use future::Future;
pub use mode::{ExecMode, ModeError};

pub(crate) use future::Pending;
pub(crate) use mode::ModeCell;

use crate::runtime::builtin::{HOST_KIND};
use crate::runtime::guard::{GuardCell, SlotCell};
use crate::runtime::outcome::{encode_err, encode_ok, ErrorCode, ErrorPayload};
use crate::runtime::trace::{EventKind, TraceEvent};
use crate::runtime::AgentCore;
use crate::transport::AgentAddress;
use crate::value::{from_bytes, to_bytes};
use crate::wire::{AgentId, Envelope, GuardRef, Instruction, KindId, MethodId, Param, RemoteRef, ResultSlot};
use future::{decode_conv, Issued, PendingWriteback, Writeback};
use parking_lot::Mutex;
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::cell::RefCell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::thread;
use std::time::Duration;
use thiserror::Error;

/// Why a future or a scope drain failed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RemoteError {
    #[error("remote {}: {}", .0.code, .0.message)]
    Remote(ErrorPayload),
    #[error("guard {guard:?} not released within {timeout:?}")]
    Timeout { guard: GuardRef, timeout: Duration },
    #[error("result decode: {0}")]
    Codec(String),
    #[error("{0}")]
    Usage(String),
}

impl RemoteError {
    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            RemoteError::Remote(p) => Some(p.code),
            _ => None,
        }
    }

    pub fn remote(code: ErrorCode, message: impl Into<String>) -> Self {
        RemoteError::Remote(ErrorPayload { code, message: message.into() })
    }
}

impl From<crate::runtime::AppError> for RemoteError {
    fn from(e: crate::runtime::AppError) -> Self {
        RemoteError::Remote(ErrorPayload { code: e.code, message: e.message })
    }
}

/// A value passed by reference: serialized to the executor and overwritten
/// with the executor's copy when the call's future resolves.
pub struct ByRef<T>(Arc<Mutex<T>>);

impl<T> Clone for ByRef<T> {
    fn clone(&self) -> Self {
        ByRef(self.0.clone())
    }
}

impl<T> ByRef<T> {
    pub fn new(value: T) -> Self {
        ByRef(Arc::new(Mutex::new(value)))
    }

    pub fn set(&self, value: T) {
        *self.0.lock() = value;
    }

    pub fn with<R>(&self, f: impl FnOnce(&T) -> R) -> R {
        f(&self.0.lock())
    }
}

impl<T: Clone> ByRef<T> {
    pub fn get(&self) -> T {
        self.0.lock().clone()
    }
}

enum ParamItem {
    Value(Vec<u8>),
    Ref(Vec<u8>, Writeback),
}

/// Parameter list of a remote construction or invocation.
#[derive(Default)]
pub struct Params {
    items: Vec<ParamItem>,
}

impl Params {
    pub fn new() -> Self {
        Params::default()
    }

    /// Appends a by-value parameter.
    pub fn arg<T: Serialize + ?Sized>(mut self, value: &T) -> Self {
        self.items.push(ParamItem::Value(to_bytes(value)));
        self
    }

    /// Appends an already-encoded by-value parameter.
    pub fn raw(mut self, bytes: Vec<u8>) -> Self {
        self.items.push(ParamItem::Value(bytes));
        self
    }

    /// Appends a by-reference parameter.
    pub fn by_ref<T>(mut self, cell: &ByRef<T>) -> Self
    where
        T: Serialize + DeserializeOwned + Send + 'static,
    {
        let bytes = cell.with(|v| to_bytes(v));
        let target = cell.clone();
        let apply: Writeback = Box::new(move |b| {
            target.set(from_bytes(b)?);
            Ok(())
        });
        self.items.push(ParamItem::Ref(bytes, apply));
        self
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Anything that names a remote object. Futures are waited first, so an
/// invocation on a just-constructed object is ordered after its
/// construction.
pub trait Target {
    fn remote_ref(&self) -> Result<RemoteRef, RemoteError>;
}

impl Target for RemoteRef {
    fn remote_ref(&self) -> Result<RemoteRef, RemoteError> {
        Ok(*self)
    }
}

impl Target for &RemoteRef {
    fn remote_ref(&self) -> Result<RemoteRef, RemoteError> {
        Ok(**self)
    }
}

impl Target for Future<RemoteRef> {
    fn remote_ref(&self) -> Result<RemoteRef, RemoteError> {
        self.get()
    }
}

impl Target for &Future<RemoteRef> {
    fn remote_ref(&self) -> Result<RemoteRef, RemoteError> {
        self.get()
    }
}

/// Scope window bookkeeping for a single activity.
type Frame = Vec<Arc<Pending>>;

const PRUNE_THRESHOLD: usize = 4096;

/// Issuing context of one activity on one agent.
pub struct Ctx {
    core: Arc<AgentCore>,
    scopes: RefCell<Vec<Frame>>,
}

struct Outgoing {
    dst: AgentId,
    instruction: Instruction,
    guard: GuardRef,
    cell: Arc<GuardCell>,
    slot: Option<(u64, Arc<SlotCell>)>,
    writebacks: Vec<PendingWriteback>,
    object: Option<u64>,
    method: Option<u32>,
    label: Option<String>,
}

impl Ctx {
    pub(crate) fn new(core: Arc<AgentCore>) -> Ctx {
        Ctx { core, scopes: RefCell::new(vec![Vec::new()]) }
    }

    /// The agent this activity runs on.
    pub fn agent(&self) -> AgentId {
        self.core.id
    }

    /// Every agent of the cluster, ordered by id.
    pub fn agents(&self) -> Vec<AgentAddress> {
        self.core.shared.addresses.clone()
    }

    pub fn mode(&self) -> ExecMode {
        self.core.shared.mode.get()
    }

    /// Operations issued in the innermost open scope and not yet drained.
    pub fn pending_count(&self) -> usize {
        self.scopes.borrow().last().map_or(0, Vec::len)
    }

    fn register(&self, p: Arc<Pending>) {
        let mut scopes = self.scopes.borrow_mut();
        let frame = scopes.last_mut().expect("a context always has an open scope");
        frame.push(p);
        if frame.len() >= PRUNE_THRESHOLD && frame.len().is_power_of_two() {
            frame.retain(|p| !p.settled_ok());
        }
    }

    fn new_guard(&self) -> (GuardRef, Arc<GuardCell>) {
        self.core.guards.new_guard()
    }

    fn new_slot(&self, guard: GuardRef) -> (ResultSlot, (u64, Arc<SlotCell>)) {
        let (slot, cell) = self.core.guards.new_slot(guard);
        (slot, (slot.slot, cell))
    }

    fn wire_params(&self, guard: GuardRef, params: Params) -> (Vec<Param>, Vec<PendingWriteback>) {
        let mut out = Vec::with_capacity(params.items.len());
        let mut writebacks = Vec::new();
        for item in params.items {
            match item {
                ParamItem::Value(bytes) => out.push(Param::by_value(bytes)),
                ParamItem::Ref(bytes, apply) => {
                    let (slot, cell) = self.core.guards.new_slot(guard);
                    out.push(Param::by_reference(slot, bytes));
                    writebacks.push((slot.slot, cell, apply));
                }
            }
        }
        (out, writebacks)
    }

    fn launch(&self, o: Outgoing) -> Arc<Pending> {
        self.core.shared.mode.mark_started();
        let mut ev = TraceEvent::new(EventKind::Issue);
        ev.guard = Some(o.guard);
        ev.tag = Some(o.instruction.tag());
        ev.peer = Some(o.dst);
        ev.object = o.object;
        ev.method = o.method;
        ev.window = Some(self.core.window());
        ev.label = o.label;
        self.core.trace.event(ev);
        let pending = Pending::new(Issued {
            core: self.core.clone(),
            guard: o.guard,
            cell: o.cell,
            slot: o.slot,
            writebacks: o.writebacks,
        });
        self.core.send(Envelope::new(self.core.id, o.dst, o.instruction), Some(o.guard));
        self.settle_new(pending)
    }

    fn settle_new(&self, pending: Arc<Pending>) -> Arc<Pending> {
        self.register(pending.clone());
        if self.mode() == ExecMode::DistributedSequential {
            let _ = pending.resolve();
        }
        pending
    }

    fn failed<T: 'static>(&self, err: RemoteError) -> Future<T> {
        let f = Future::failed(err);
        self.register(f.pending().clone());
        f
    }

    /// Constructs an object of `kind` on `host`.
    pub fn construct(&self, host: AgentId, kind: KindId, params: Params) -> Future<RemoteRef> {
        let label = self.core.kinds.get(kind).map(|k| k.name.clone());
        self.construct_labelled(host, kind, params, label)
    }

    fn construct_labelled(&self, host: AgentId, kind: KindId, params: Params, label: Option<String>) -> Future<RemoteRef> {
        let (guard, cell) = self.new_guard();
        let (result, slot) = self.new_slot(guard);
        let (params, writebacks) = self.wire_params(guard, params);
        let p = self.launch(Outgoing {
            dst: host,
            instruction: Instruction::Construct { kind, result, guard, params },
            guard,
            cell,
            slot: Some(slot),
            writebacks,
            object: None,
            method: None,
            label,
        });
        Future::from_parts(p, decode_conv())
    }

    /// Invokes `method` on `target`; the future yields the method's return
    /// value.
    pub fn invoke<R: DeserializeOwned + 'static>(&self, target: impl Target, method: MethodId, params: Params) -> Future<R> {
        let target = match target.remote_ref() {
            Ok(t) => t,
            Err(e) => return self.failed(e),
        };
        let (guard, cell) = self.new_guard();
        let (result, slot) = self.new_slot(guard);
        let (params, writebacks) = self.wire_params(guard, params);
        let p = self.launch(Outgoing {
            dst: target.agent,
            instruction: Instruction::Invoke { target, method, result, guard, params },
            guard,
            cell,
            slot: Some(slot),
            writebacks,
            object: Some(target.object),
            method: Some(method.0),
            label: None,
        });
        Future::from_parts(p, decode_conv())
    }

    pub fn destroy(&self, target: impl Target) -> Future<()> {
        let target = match target.remote_ref() {
            Ok(t) => t,
            Err(e) => return self.failed(e),
        };
        let (guard, cell) = self.new_guard();
        let p = self.launch(Outgoing {
            dst: target.agent,
            instruction: Instruction::Destroy { target, guard },
            guard,
            cell,
            slot: None,
            writebacks: Vec::new(),
            object: Some(target.object),
            method: None,
            label: None,
        });
        Future::from_parts(p, Arc::new(|_| Ok(())))
    }

    /// Reads `length` raw bytes at `offset` through the target kind's block
    /// accessor.
    pub fn remote_read(&self, target: impl Target, offset: u64, length: u64) -> Future<Vec<u8>> {
        let target = match target.remote_ref() {
            Ok(t) => t,
            Err(e) => return self.failed(e),
        };
        let (guard, cell) = self.new_guard();
        let (result, slot) = self.new_slot(guard);
        let p = self.launch(Outgoing {
            dst: target.agent,
            instruction: Instruction::ReadBlock { target, offset, length, result, guard },
            guard,
            cell,
            slot: Some(slot),
            writebacks: Vec::new(),
            object: Some(target.object),
            method: None,
            label: None,
        });
        Future::from_parts(p, Arc::new(|b| Ok(b.to_vec())))
    }

    /// Overwrites bytes at `offset` through the target kind's block
    /// accessor.
    pub fn remote_write(&self, target: impl Target, offset: u64, bytes: Vec<u8>) -> Future<()> {
        let target = match target.remote_ref() {
            Ok(t) => t,
            Err(e) => return self.failed(e),
        };
        let (guard, cell) = self.new_guard();
        let p = self.launch(Outgoing {
            dst: target.agent,
            instruction: Instruction::CopyBlock { target, offset, payload: bytes, guard },
            guard,
            cell,
            slot: None,
            writebacks: Vec::new(),
            object: Some(target.object),
            method: None,
            label: None,
        });
        Future::from_parts(p, Arc::new(|_| Ok(())))
    }

    /// Asks the cluster for the virtual host called `name`. The same name
    /// always yields the same agent within a run. The host object itself is
    /// constructed on that agent.
    pub fn create_host(&self, name: &str) -> Future<AgentAddress> {
        let Some(directory) = &self.core.shared.hosts else {
            return self.failed(RemoteError::Usage("host directory is only available in the driver".into()));
        };
        let address = match directory.lock().resolve(name) {
            Ok(a) => a,
            Err(e) => return self.failed(RemoteError::Usage(e)),
        };
        let f = self.construct_labelled(
            address.agent,
            HOST_KIND,
            Params::new().arg(name),
            Some(format!("host:{name}")),
        );
        f.map(move |_| address.clone())
    }

    /// Marks a local computation in the trace.
    pub fn local<R>(&self, label: &str, f: impl FnOnce() -> R) -> R {
        let mut start = TraceEvent::new(EventKind::ExecStart);
        start.label = Some(label.to_string());
        self.core.trace.event(start);
        let r = f();
        let mut end = TraceEvent::new(EventKind::ExecEnd);
        end.label = Some(label.to_string());
        self.core.trace.event(end);
        r
    }

    /// Runs `body` as a child activity on this agent. The child's own
    /// operations are drained before its future resolves.
    pub fn spawn<R, F>(&self, label: &str, body: F) -> Future<R>
    where
        R: Serialize + DeserializeOwned + 'static,
        F: FnOnce(&Ctx) -> Result<R, RemoteError> + Send + 'static,
    {
        self.core.shared.mode.mark_started();
        let (guard, cell) = self.new_guard();
        let (result, slot) = self.new_slot(guard);
        let mut ev = TraceEvent::new(EventKind::Issue);
        ev.guard = Some(guard);
        ev.peer = Some(self.core.id);
        ev.window = Some(self.core.window());
        ev.label = Some(format!("spawn:{label}"));
        self.core.trace.event(ev);
        let pending = Pending::new(Issued { core: self.core.clone(), guard, cell, slot: Some(slot), writebacks: Vec::new() });
        let core = self.core.clone();
        let spawned = thread::Builder::new().name(format!("agent{}-{label}", core.id.0)).spawn(move || {
            let ctx = Ctx::new(core.clone());
            let r = catch_unwind(AssertUnwindSafe(|| body(&ctx)));
            let drained = ctx.drain();
            let payload = match (r, drained) {
                (Ok(Ok(v)), Ok(())) => encode_ok(&to_bytes(&v)),
                (Ok(Ok(_)), Err(e)) | (Ok(Err(e)), _) => error_payload(&e),
                (Err(_), _) => encode_err(ErrorCode::Panic, "child activity panicked"),
            };
            core.accept_result(core.id, result, payload);
            core.accept_release(core.id, guard);
        });
        if let Err(e) = spawned {
            self.core.accept_result(self.core.id, result, encode_err(ErrorCode::Application, e.to_string()));
            self.core.accept_release(self.core.id, guard);
        }
        Future::from_parts(self.settle_new(pending), decode_conv())
    }

    /// Runs `body` in a nested plain scope. Operations it issues stay
    /// pending in the enclosing scope.
    pub fn scope<R>(&self, body: impl FnOnce(&Ctx) -> R) -> R {
        self.scopes.borrow_mut().push(Vec::new());
        let r = body(self);
        let frame = self.scopes.borrow_mut().pop().expect("scope frame");
        self.scopes.borrow_mut().last_mut().expect("enclosing scope").extend(frame);
        r
    }

    /// Barrier statement: waits for everything pending in the enclosing
    /// scope, runs `body`, then waits for everything `body` issued. Errors
    /// are reported only after all guards have settled.
    pub fn barrier<R>(&self, body: impl FnOnce(&Ctx) -> R) -> Result<R, RemoteError> {
        let before = self.drain();
        self.core.next_window();
        self.scopes.borrow_mut().push(Vec::new());
        let r = body(self);
        let frame = self.scopes.borrow_mut().pop().expect("barrier frame");
        let inner = drain_frame(frame);
        self.core.next_window();
        before?;
        inner?;
        Ok(r)
    }

    /// Waits for everything pending in the innermost scope.
    pub fn drain(&self) -> Result<(), RemoteError> {
        let frame = std::mem::take(self.scopes.borrow_mut().last_mut().expect("open scope"));
        drain_frame(frame)
    }

    /// Sends a raw instruction from this agent. Meant for protocol tests.
    #[doc(hidden)]
    pub fn send_raw(&self, dst: AgentId, instruction: Instruction) {
        let guard = instruction.guard();
        self.core.send(Envelope::new(self.core.id, dst, instruction), guard);
    }
}

impl Drop for Ctx {
    fn drop(&mut self) {
        // Work issued but never awaited still settles before the activity
        // disappears, so no guard outlives its issuer unobserved.
        if !thread::panicking() {
            for frame in self.scopes.get_mut().drain(..) {
                let _ = drain_frame(frame);
            }
        }
    }
}

fn error_payload(e: &RemoteError) -> Vec<u8> {
    match e {
        RemoteError::Remote(p) => encode_err(p.code, p.message.clone()),
        other => encode_err(ErrorCode::Application, other.to_string()),
    }
}

fn drain_frame(frame: Frame) -> Result<(), RemoteError> {
    let mut first = None;
    for p in frame {
        if let Err(e) = p.resolve() {
            first.get_or_insert_with(|| e.clone());
        }
    }
    first.map_or(Ok(()), Err)
}
