//! Growing worker pool.
//!
//! Starts with a few workers. When a worker is about to block (waiting on a
//! guard, or on an object held by another method) and no idle worker is
//! left, one more worker is started, up to a ceiling. Reaching the ceiling
//! is reported as a fault: it is where the model's cyclic-wait deadlocks
//! become visible.

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};
use parking_lot::Mutex;
use std::cell::RefCell;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

pub(crate) type Job = Box<dyn FnOnce() + Send>;
pub(crate) type FaultSink = Arc<Mutex<Vec<String>>>;

const IDLE_TICK: Duration = Duration::from_millis(50);
const RETIRE_AFTER: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PoolStats {
    pub total: usize,
    pub idle: usize,
    pub blocked: usize,
    pub peak: usize,
}

struct PoolInner {
    name: String,
    tx: Sender<Job>,
    rx: Receiver<Job>,
    state: Mutex<PoolStats>,
    floor: usize,
    ceiling: usize,
    stopped: AtomicBool,
    exhausted: AtomicBool,
    faults: FaultSink,
}

pub(crate) struct Pool {
    inner: Arc<PoolInner>,
}

thread_local! {
    static CURRENT: RefCell<Option<Arc<PoolInner>>> = const { RefCell::new(None) };
}

impl Pool {
    pub fn new(name: impl Into<String>, initial: usize, ceiling: usize, faults: FaultSink) -> Pool {
        let (tx, rx) = unbounded();
        let initial = initial.max(1);
        let inner = Arc::new(PoolInner {
            name: name.into(),
            tx,
            rx,
            state: Mutex::new(PoolStats::default()),
            floor: initial,
            ceiling: ceiling.max(initial),
            stopped: AtomicBool::new(false),
            exhausted: AtomicBool::new(false),
            faults,
        });
        for _ in 0..initial {
            spawn_worker(&inner);
        }
        Pool { inner }
    }

    pub fn submit(&self, job: Job) {
        if self.inner.tx.send(job).is_err() {
            log::warn!("{}: job submitted after shutdown", self.inner.name);
        }
    }

    pub fn stats(&self) -> PoolStats {
        *self.inner.state.lock()
    }

    pub fn stop(&self) {
        self.inner.stopped.store(true, Ordering::Release);
    }
}

fn spawn_worker(inner: &Arc<PoolInner>) {
    {
        let mut st = inner.state.lock();
        st.total += 1;
        st.idle += 1;
        st.peak = st.peak.max(st.total);
    }
    let worker = inner.clone();
    let spawned = thread::Builder::new()
        .name(format!("{}-worker", inner.name))
        .spawn(move || worker_loop(worker));
    if let Err(e) = spawned {
        let mut st = inner.state.lock();
        st.total -= 1;
        st.idle -= 1;
        inner.faults.lock().push(format!("{}: cannot start worker: {e}", inner.name));
    }
}

fn worker_loop(inner: Arc<PoolInner>) {
    CURRENT.with(|c| *c.borrow_mut() = Some(inner.clone()));
    let mut idle_since = Instant::now();
    loop {
        match inner.rx.recv_timeout(IDLE_TICK) {
            Ok(job) => {
                inner.state.lock().idle -= 1;
                job();
                inner.state.lock().idle += 1;
                idle_since = Instant::now();
            }
            Err(RecvTimeoutError::Timeout) => {
                let stopping = inner.stopped.load(Ordering::Acquire);
                let mut st = inner.state.lock();
                if stopping || (st.total > inner.floor && idle_since.elapsed() > RETIRE_AFTER) {
                    st.total -= 1;
                    st.idle -= 1;
                    break;
                }
            }
            Err(RecvTimeoutError::Disconnected) => {
                let mut st = inner.state.lock();
                st.total -= 1;
                st.idle -= 1;
                break;
            }
        }
    }
    CURRENT.with(|c| *c.borrow_mut() = None);
}

/// Runs `f`, which may block, while marking the calling pool worker as
/// blocked. On threads outside any pool it just runs `f`.
pub(crate) fn block_on<R>(f: impl FnOnce() -> R) -> R {
    let pool = CURRENT.with(|c| c.borrow().clone());
    let Some(inner) = pool else { return f() };
    let grow = {
        let mut st = inner.state.lock();
        st.blocked += 1;
        if st.idle > 0 {
            false
        } else if st.total < inner.ceiling {
            true
        } else {
            if !inner.exhausted.swap(true, Ordering::AcqRel) {
                inner.faults.lock().push(format!(
                    "{}: worker pool exhausted at ceiling {} with every worker blocked",
                    inner.name, inner.ceiling
                ));
            }
            false
        }
    };
    if grow {
        spawn_worker(&inner);
    }
    let r = f();
    inner.state.lock().blocked -= 1;
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crossbeam_channel::bounded;

    #[test]
    fn blocked_workers_grow_the_pool() {
        use std::sync::atomic::AtomicUsize;
        let faults = FaultSink::default();
        let pool = Pool::new("t", 1, 64, faults.clone());
        let arrived = Arc::new(AtomicUsize::new(0));
        let (done_tx, done_rx) = unbounded();
        // Every job blocks until all eight are blocked at once, which only
        // happens if the pool grows.
        for _ in 0..8 {
            let arrived = arrived.clone();
            let done = done_tx.clone();
            pool.submit(Box::new(move || {
                arrived.fetch_add(1, Ordering::SeqCst);
                let deadline = Instant::now() + Duration::from_secs(10);
                let all = block_on(|| {
                    while arrived.load(Ordering::SeqCst) < 8 && Instant::now() < deadline {
                        thread::sleep(Duration::from_millis(1));
                    }
                    arrived.load(Ordering::SeqCst) == 8
                });
                done.send(all).unwrap();
            }));
        }
        for _ in 0..8 {
            assert!(done_rx.recv_timeout(Duration::from_secs(20)).unwrap());
        }
        assert!(pool.stats().peak >= 8);
        assert!(faults.lock().is_empty());
        pool.stop();
    }

    #[test]
    fn ceiling_reports_exhaustion() {
        let faults = FaultSink::default();
        let pool = Pool::new("t", 1, 2, faults.clone());
        let (gate_tx, gate_rx) = bounded::<()>(0);
        let (started_tx, started_rx) = unbounded();
        for _ in 0..2 {
            let gate = gate_rx.clone();
            let started = started_tx.clone();
            pool.submit(Box::new(move || {
                started.send(()).unwrap();
                block_on(|| gate.recv().unwrap());
            }));
        }
        for _ in 0..2 {
            started_rx.recv_timeout(Duration::from_secs(10)).unwrap();
        }
        let deadline = Instant::now() + Duration::from_secs(10);
        while faults.lock().is_empty() && Instant::now() < deadline {
            thread::sleep(Duration::from_millis(5));
        }
        assert!(faults.lock()[0].contains("exhausted"));
        gate_tx.send(()).unwrap();
        gate_tx.send(()).unwrap();
        pool.stop();
    }

    #[test]
    fn block_on_outside_pool_just_runs() {
        assert_eq!(block_on(|| 7), 7);
    }
}
