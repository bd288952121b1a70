//! One virtual host: object table, guard table, dispatcher, worker pool and
//! sender.
//!
//! The dispatcher is the only consumer of the agent's inbound frames. It
//! fills result slots and releases guards itself, in arrival order, so a
//! `WriteResult` is always applied before the `ReleaseGuard` that follows
//! it on the same pair. Work-initiating instructions go to the pool. All
//! outgoing instructions funnel through one sender thread.

use super::config::RuntimeConfig;
use super::guard::{GuardTable, ProtocolError};
use super::kind::{AppError, Args, Instance, KindDescriptor, KindRegistry, MethodImpl};
use super::outcome::{encode_err, encode_ok, ErrorCode};
use super::pool::{block_on, FaultSink, Pool, PoolStats};
use super::trace::{EventKind, TraceEvent, TraceLog, WireRecord};
use super::HostDirectory;
use crate::api::{Ctx, ModeCell};
use crate::transport::{AgentAddress, Endpoint, TransportError};
use crate::value::to_bytes;
use crate::wire::{decode, encode, AgentId, Envelope, GuardRef, Instruction, ParamMode, RemoteRef, ResultSlot};
use crossbeam_channel::{unbounded, Receiver, Sender};
use parking_lot::{Mutex, RwLock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::any::Any;
use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

/// State shared by all agents of a cluster that live in one process.
pub(crate) struct ClusterShared {
    pub addresses: Vec<AgentAddress>,
    /// Present only in the driver process.
    pub hosts: Option<Mutex<HostDirectory>>,
    pub mode: ModeCell,
}

struct ObjectEntry {
    kind: Arc<KindDescriptor>,
    instance: RwLock<Instance>,
}

struct ObjectTable {
    next: AtomicU64,
    map: RwLock<HashMap<u64, Arc<ObjectEntry>>>,
}

impl ObjectTable {
    fn insert(&self, kind: Arc<KindDescriptor>, instance: Instance) -> u64 {
        let id = self.next.fetch_add(1, Ordering::Relaxed);
        self.map.write().insert(id, Arc::new(ObjectEntry { kind, instance: RwLock::new(instance) }));
        id
    }

    fn get(&self, id: u64) -> Option<Arc<ObjectEntry>> {
        self.map.read().get(&id).cloned()
    }

    fn remove(&self, id: u64) -> Option<Arc<ObjectEntry>> {
        self.map.write().remove(&id)
    }
}

/// Seeded delay injection at send and execution points.
pub(crate) struct Fuzzer {
    rng: Mutex<ChaCha8Rng>,
    min_us: u64,
    max_us: u64,
}

impl Fuzzer {
    pub fn new(seed: u64, agent: AgentId, min_us: u64, max_us: u64) -> Self {
        let stream = seed ^ agent.0.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        Fuzzer { rng: Mutex::new(ChaCha8Rng::seed_from_u64(stream)), min_us, max_us: max_us.max(min_us) }
    }

    pub fn delay(&self) {
        let us = self.rng.lock().gen_range(self.min_us..=self.max_us);
        if us > 0 {
            thread::sleep(Duration::from_micros(us));
        }
    }
}

pub(crate) enum OutMsg {
    Send { env: Envelope, guard: Option<GuardRef>, window: u64 },
    Stop,
}

pub(crate) struct AgentCore {
    pub id: AgentId,
    pub kinds: Arc<KindRegistry>,
    objects: ObjectTable,
    pub guards: GuardTable,
    outbox: Sender<OutMsg>,
    pub trace: TraceLog,
    faults: FaultSink,
    pool: Pool,
    pub shared: Arc<ClusterShared>,
    fuzz: Option<Fuzzer>,
    window: AtomicU64,
    pub wait_timeout: Option<Duration>,
}

/// Running agent: its core plus the dispatcher and sender threads.
pub(crate) struct AgentHandle {
    pub core: Arc<AgentCore>,
    endpoint: Arc<dyn Endpoint>,
    dispatcher: Option<JoinHandle<()>>,
    sender: Option<JoinHandle<()>>,
}

pub(crate) fn start_agent(
    endpoint: Arc<dyn Endpoint>,
    kinds: Arc<KindRegistry>,
    shared: Arc<ClusterShared>,
    config: &RuntimeConfig,
) -> std::io::Result<AgentHandle> {
    let id = endpoint.agent();
    let (outbox, out_rx) = unbounded();
    let faults = FaultSink::default();
    let core = Arc::new(AgentCore {
        id,
        kinds,
        objects: ObjectTable { next: AtomicU64::new(1), map: RwLock::new(HashMap::new()) },
        guards: GuardTable::new(id),
        outbox,
        trace: TraceLog::new(id, config.trace),
        faults: faults.clone(),
        pool: Pool::new(format!("agent{}", id.0), config.initial_workers, config.pool_ceiling, faults),
        shared,
        fuzz: config.fuzz.map(|(lo, hi)| Fuzzer::new(config.seed, id, lo, hi)),
        window: AtomicU64::new(0),
        wait_timeout: config.wait_timeout,
    });
    let c = core.clone();
    let e = endpoint.clone();
    let sender = thread::Builder::new().name(format!("agent{}-sender", id.0)).spawn(move || sender_loop(c, e, out_rx))?;
    let c = core.clone();
    let e = endpoint.clone();
    let dispatcher = thread::Builder::new().name(format!("agent{}-dispatch", id.0)).spawn(move || dispatch_loop(c, e))?;
    Ok(AgentHandle { core, endpoint, dispatcher: Some(dispatcher), sender: Some(sender) })
}

impl AgentHandle {
    /// Stops the dispatcher, flushes the sender and retires the pool.
    pub fn stop(&mut self) {
        self.endpoint.shutdown();
        if let Some(d) = self.dispatcher.take() {
            let _ = d.join();
        }
        let _ = self.core.outbox.send(OutMsg::Stop);
        if let Some(s) = self.sender.take() {
            let _ = s.join();
        }
        self.core.pool.stop();
    }
}

impl Drop for AgentHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

fn sender_loop(core: Arc<AgentCore>, endpoint: Arc<dyn Endpoint>, rx: Receiver<OutMsg>) {
    for msg in rx {
        let (env, guard, window) = match msg {
            OutMsg::Stop => break,
            OutMsg::Send { env, guard, window } => (env, guard, window),
        };
        if let Some(f) = &core.fuzz {
            f.delay();
        }
        let bytes = encode(&env);
        if core.trace.enabled() {
            core.trace.wire(wire_record(&env, guard, window, bytes.len()));
        }
        if let Err(e) = endpoint.send_frame(env.dst, bytes) {
            core.fault(format!("send {} to {} failed: {e}", env.instruction.name(), env.dst));
            core.fail_locally(&env.instruction, &e);
        }
    }
}

fn wire_record(env: &Envelope, guard: Option<GuardRef>, window: u64, encoded_len: usize) -> WireRecord {
    let (object, data) = match &env.instruction {
        Instruction::Invoke { target, .. }
        | Instruction::Destroy { target, .. }
        | Instruction::ReadBlock { target, .. } => (Some(target.object), None),
        Instruction::CopyBlock { target, payload, .. } => (Some(target.object), Some(payload)),
        Instruction::WriteResult { slot, payload } => (Some(slot.slot), Some(payload)),
        Instruction::Construct { .. } | Instruction::ReleaseGuard { .. } => (None, None),
    };
    WireRecord {
        seq: 0,
        src: env.src,
        dst: env.dst,
        tag: env.instruction.tag(),
        bytes: (encoded_len + crate::wire::FRAME_HEADER_LEN) as u64,
        payload_len: data.map_or(0, |d| d.len() as u64),
        guard: guard.or(env.instruction.guard()),
        object,
        window: Some(window),
        digest: data.map(|d| hex::encode(Sha256::digest(d))),
        t_ns: 0,
    }
}

fn dispatch_loop(core: Arc<AgentCore>, endpoint: Arc<dyn Endpoint>) {
    while let Some((src, frame)) = endpoint.recv_frame() {
        let env = match decode(&frame) {
            Ok(env) => env,
            Err(e) => {
                core.fault(format!("dropped frame from {src}: {e}"));
                continue;
            }
        };
        if env.dst != core.id {
            core.fault(format!("frame from {src} addressed to {} arrived at {}", env.dst, core.id));
            continue;
        }
        let instr = env.instruction;
        let mut ev = TraceEvent::new(EventKind::Dispatch);
        ev.guard = instr.guard();
        ev.tag = Some(instr.tag());
        ev.peer = Some(env.src);
        core.trace.event(ev);
        match instr {
            Instruction::WriteResult { slot, payload } => core.accept_result(env.src, slot, payload),
            Instruction::ReleaseGuard { guard } => core.accept_release(env.src, guard),
            work => {
                let c = core.clone();
                let from = env.src;
                core.pool.submit(Box::new(move || c.execute(from, work)));
            }
        }
    }
}

fn panic_message(p: Box<dyn Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".into()
    }
}

fn app_result(r: std::thread::Result<Result<Vec<u8>, AppError>>) -> Result<Vec<u8>, AppError> {
    match r {
        Ok(r) => r,
        Err(p) => Err(AppError::with_code(ErrorCode::Panic, panic_message(p))),
    }
}

fn to_payload(r: Result<Vec<u8>, AppError>) -> Vec<u8> {
    match r {
        Ok(v) => encode_ok(&v),
        Err(e) => encode_err(e.code, e.message),
    }
}

impl AgentCore {
    pub fn fault(&self, message: String) {
        log::warn!("{}: {message}", self.id);
        self.faults.lock().push(format!("{}: {message}", self.id));
    }

    pub fn faults(&self) -> Vec<String> {
        self.faults.lock().clone()
    }

    pub fn pool_stats(&self) -> PoolStats {
        self.pool.stats()
    }

    pub fn window(&self) -> u64 {
        self.window.load(Ordering::Relaxed)
    }

    pub fn next_window(&self) {
        self.window.fetch_add(1, Ordering::Relaxed);
    }

    pub fn send(&self, env: Envelope, guard: Option<GuardRef>) {
        let window = self.window();
        if self.outbox.send(OutMsg::Send { env, guard, window }).is_err() {
            self.fault("outgoing instruction after sender stopped".into());
        }
    }

    pub fn accept_result(&self, src: AgentId, slot: ResultSlot, payload: Vec<u8>) {
        if slot.agent != self.id {
            self.fault(format!("write_result from {src} for foreign slot {slot:?}"));
            return;
        }
        match self.guards.write_slot(slot.slot, payload) {
            Ok(guard) => {
                let mut ev = TraceEvent::new(EventKind::WriteResult);
                ev.guard = Some(guard);
                ev.object = Some(slot.slot);
                ev.peer = Some(src);
                self.trace.event(ev);
            }
            Err(e) => self.protocol_fault(src, e),
        }
    }

    /// Releases a guard owned by this agent and wakes its waiters.
    pub fn accept_release(&self, src: AgentId, guard: GuardRef) {
        if guard.agent != self.id {
            self.fault(format!("release from {src} for foreign guard {guard:?}"));
            return;
        }
        match self.guards.take(guard.guard) {
            Ok(cell) => {
                let mut ev = TraceEvent::new(EventKind::Release);
                ev.guard = Some(guard);
                ev.peer = Some(src);
                self.trace.event(ev);
                cell.release();
            }
            Err(e) => self.protocol_fault(src, e),
        }
    }

    fn protocol_fault(&self, src: AgentId, e: ProtocolError) {
        self.fault(format!("protocol error (from {src}): {e}"));
    }

    /// A work instruction that never left this agent: answer it here with a
    /// transport error so the issuer does not hang.
    fn fail_locally(&self, instr: &Instruction, err: &TransportError) {
        if !instr.initiates_work() {
            return;
        }
        let Some(guard) = instr.guard().filter(|g| g.agent == self.id) else { return };
        let result = match instr {
            Instruction::Construct { result, .. }
            | Instruction::Invoke { result, .. }
            | Instruction::ReadBlock { result, .. } => Some(*result),
            _ => None,
        };
        if let Some(slot) = result {
            self.accept_result(self.id, slot, encode_err(ErrorCode::Transport, err.to_string()));
        }
        self.accept_release(self.id, guard);
    }

    fn exec_event(&self, kind: EventKind, src: AgentId, instr_tag: u8, guard: GuardRef, object: Option<u64>) -> TraceEvent {
        let mut ev = TraceEvent::new(kind);
        ev.guard = Some(guard);
        ev.tag = Some(instr_tag);
        ev.peer = Some(src);
        ev.object = object;
        ev
    }

    /// Sends the result writes for `guard` followed by its release.
    fn reply(&self, guard: GuardRef, writes: Vec<(ResultSlot, Vec<u8>)>) {
        for (slot, payload) in writes {
            self.send(Envelope::new(self.id, slot.agent, Instruction::WriteResult { slot, payload }), Some(guard));
        }
        self.send(Envelope::new(self.id, guard.agent, Instruction::ReleaseGuard { guard }), Some(guard));
    }

    fn object(&self, target: RemoteRef) -> Result<Arc<ObjectEntry>, AppError> {
        if target.agent != self.id {
            return Err(AppError::with_code(ErrorCode::UnknownObject, format!("{target} is not hosted by {}", self.id)));
        }
        self.objects
            .get(target.object)
            .ok_or_else(|| AppError::with_code(ErrorCode::UnknownObject, format!("no object {target}")))
    }

    /// Lets work issued by a method finish before its guard is released; a
    /// failure there fails the method.
    fn settle(&self, ctx: &Ctx, r: Result<Vec<u8>, AppError>) -> Result<Vec<u8>, AppError> {
        let drained = ctx.drain();
        match (r, drained) {
            (Ok(_), Err(e)) => Err(AppError::from(e)),
            (r, _) => r,
        }
    }

    fn execute(self: &Arc<Self>, src: AgentId, instr: Instruction) {
        if let Some(f) = &self.fuzz {
            f.delay();
        }
        let tag = instr.tag();
        match instr {
            Instruction::Construct { kind, result, guard, params } => {
                let mut start = self.exec_event(EventKind::ExecStart, src, tag, guard, None);
                start.label = self.kinds.get(kind).map(|k| k.name.clone());
                self.trace.event(start);
                let ctx = Ctx::new(self.clone());
                let r = match self.kinds.get(kind) {
                    None => Err(AppError::with_code(ErrorCode::UnknownKind, format!("kind {} is not registered", kind.0))),
                    Some(desc) => {
                        let mut args = Args::new(params);
                        let built = catch_unwind(AssertUnwindSafe(|| (desc.constructor)(&ctx, &mut args)));
                        match built {
                            Ok(Ok(instance)) => {
                                let id = self.objects.insert(desc.clone(), instance);
                                Ok(to_bytes(&RemoteRef::new(self.id, id)))
                            }
                            Ok(Err(e)) => Err(e),
                            Err(p) => Err(AppError::with_code(ErrorCode::Panic, panic_message(p))),
                        }
                    }
                };
                let r = self.settle(&ctx, r);
                let object = r.as_ref().ok().and_then(|b| crate::value::from_bytes::<RemoteRef>(b).ok()).map(|r| r.object);
                self.trace.event(self.exec_event(EventKind::ExecEnd, src, tag, guard, object));
                self.reply(guard, vec![(result, to_payload(r))]);
            }
            Instruction::Invoke { target, method, result, guard, params } => {
                let mut start = self.exec_event(EventKind::ExecStart, src, tag, guard, Some(target.object));
                start.method = Some(method.0);
                self.trace.event(start);
                let ctx = Ctx::new(self.clone());
                let mut args = Args::new(params);
                let r = self.run_method(&ctx, target, method, &mut args);
                let r = self.settle(&ctx, r);
                let mut end = self.exec_event(EventKind::ExecEnd, src, tag, guard, Some(target.object));
                end.method = Some(method.0);
                self.trace.event(end);
                let mut writes = Vec::new();
                if r.is_ok() {
                    for p in args.into_params() {
                        if let ParamMode::ByReference { writeback } = p.mode {
                            writes.push((writeback, p.payload));
                        }
                    }
                }
                writes.push((result, to_payload(r)));
                self.reply(guard, writes);
            }
            Instruction::Destroy { target, guard } => {
                self.trace.event(self.exec_event(EventKind::ExecStart, src, tag, guard, Some(target.object)));
                let removed = self.object(target).map(|_| self.objects.remove(target.object));
                if let Err(e) = removed {
                    self.fault(format!("destroy from {src}: {e}"));
                }
                self.trace.event(self.exec_event(EventKind::ExecEnd, src, tag, guard, Some(target.object)));
                self.reply(guard, Vec::new());
            }
            Instruction::CopyBlock { target, offset, payload, guard } => {
                self.trace.event(self.exec_event(EventKind::ExecStart, src, tag, guard, Some(target.object)));
                let r = self.object(target).and_then(|entry| {
                    let block = entry.kind.block.as_ref().ok_or_else(|| no_block(&entry.kind))?;
                    let mut inst = lock_write(&entry.instance);
                    (block.write)(inst.as_mut(), offset, &payload)
                });
                if let Err(e) = r {
                    self.fault(format!("copy_block from {src} to {target}: {e}"));
                }
                self.trace.event(self.exec_event(EventKind::ExecEnd, src, tag, guard, Some(target.object)));
                self.reply(guard, Vec::new());
            }
            Instruction::ReadBlock { target, offset, length, result, guard } => {
                self.trace.event(self.exec_event(EventKind::ExecStart, src, tag, guard, Some(target.object)));
                let r = self.object(target).and_then(|entry| {
                    let block = entry.kind.block.as_ref().ok_or_else(|| no_block(&entry.kind))?;
                    let inst = lock_read(&entry.instance);
                    (block.read)(inst.as_ref(), offset, length)
                });
                self.trace.event(self.exec_event(EventKind::ExecEnd, src, tag, guard, Some(target.object)));
                self.reply(guard, vec![(result, to_payload(r))]);
            }
            Instruction::WriteResult { .. } | Instruction::ReleaseGuard { .. } => {
                unreachable!("completion instructions are handled by the dispatcher")
            }
        }
    }

    fn run_method(
        &self,
        ctx: &Ctx,
        target: RemoteRef,
        method: crate::wire::MethodId,
        args: &mut Args,
    ) -> Result<Vec<u8>, AppError> {
        let entry = self.object(target)?;
        let imp = entry.kind.methods.get(&method).ok_or_else(|| {
            AppError::with_code(
                ErrorCode::UnknownMethod,
                format!("kind {} has no method {}", entry.kind.name, method.0),
            )
        })?;
        match imp {
            MethodImpl::Exclusive(f) => {
                let mut inst = lock_write(&entry.instance);
                app_result(catch_unwind(AssertUnwindSafe(|| f(inst.as_mut(), ctx, args))))
            }
            MethodImpl::Shared(f) => {
                let inst = lock_read(&entry.instance);
                app_result(catch_unwind(AssertUnwindSafe(|| f(inst.as_ref(), ctx, args))))
            }
        }
    }
}

fn no_block(kind: &KindDescriptor) -> AppError {
    AppError::with_code(ErrorCode::NoBlockAccess, format!("kind {} has no block accessor", kind.name))
}

fn lock_write(l: &RwLock<Instance>) -> parking_lot::RwLockWriteGuard<'_, Instance> {
    match l.try_write() {
        Some(g) => g,
        None => block_on(|| l.write()),
    }
}

fn lock_read(l: &RwLock<Instance>) -> parking_lot::RwLockReadGuard<'_, Instance> {
    match l.try_read() {
        Some(g) => g,
        None => block_on(|| l.read()),
    }
}
