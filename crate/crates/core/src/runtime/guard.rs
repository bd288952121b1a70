//! Guards and result slots owned by one agent.
//!
//! A guard is a one-shot completion flag. Its state lives in a shared cell,
//! so a release that arrives before anyone waits is never lost. Released
//! guards and written slots leave the table; ids are monotone, so a second
//! release (or write) of a retired id is told apart from an unknown one.

use crate::wire::{AgentId, GuardRef, ResultSlot};
use parking_lot::{Condvar, Mutex};
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("guard {0:?} released twice")]
    AlreadyReleased(GuardRef),
    #[error("release of unknown guard {0:?}")]
    UnknownGuard(GuardRef),
    #[error("result slot {0:?} written twice")]
    SlotWrittenTwice(ResultSlot),
    #[error("write to unknown result slot {0:?}")]
    UnknownSlot(ResultSlot),
}

#[derive(Default)]
pub(crate) struct GuardCell {
    released: Mutex<bool>,
    cv: Condvar,
}

impl GuardCell {
    pub fn release(&self) {
        *self.released.lock() = true;
        self.cv.notify_all();
    }

    pub fn is_released(&self) -> bool {
        *self.released.lock()
    }

    /// Waits for the release. Returns false on timeout.
    pub fn wait(&self, timeout: Option<Duration>) -> bool {
        let mut released = self.released.lock();
        let deadline = timeout.map(|t| Instant::now() + t);
        while !*released {
            match deadline {
                Some(d) => {
                    if self.cv.wait_until(&mut released, d).timed_out() {
                        return *released;
                    }
                }
                None => self.cv.wait(&mut released),
            }
        }
        true
    }
}

pub(crate) struct SlotCell {
    pub guard: GuardRef,
    value: Mutex<Option<Vec<u8>>>,
}

impl SlotCell {
    pub fn get(&self) -> Option<Vec<u8>> {
        self.value.lock().clone()
    }
}

pub(crate) struct GuardTable {
    agent: AgentId,
    next_guard: AtomicU64,
    next_slot: AtomicU64,
    guards: Mutex<HashMap<u64, Arc<GuardCell>>>,
    slots: Mutex<HashMap<u64, Arc<SlotCell>>>,
}

impl GuardTable {
    pub fn new(agent: AgentId) -> Self {
        GuardTable {
            agent,
            next_guard: AtomicU64::new(1),
            next_slot: AtomicU64::new(1),
            guards: Mutex::new(HashMap::new()),
            slots: Mutex::new(HashMap::new()),
        }
    }

    pub fn new_guard(&self) -> (GuardRef, Arc<GuardCell>) {
        let id = self.next_guard.fetch_add(1, Ordering::Relaxed);
        let cell = Arc::new(GuardCell::default());
        self.guards.lock().insert(id, cell.clone());
        (GuardRef { agent: self.agent, guard: id }, cell)
    }

    pub fn new_slot(&self, guard: GuardRef) -> (ResultSlot, Arc<SlotCell>) {
        let id = self.next_slot.fetch_add(1, Ordering::Relaxed);
        let cell = Arc::new(SlotCell { guard, value: Mutex::new(None) });
        self.slots.lock().insert(id, cell.clone());
        (ResultSlot { agent: self.agent, slot: id }, cell)
    }

    /// Retires a guard and hands back its cell; the caller releases it.
    pub fn take(&self, guard: u64) -> Result<Arc<GuardCell>, ProtocolError> {
        let g = GuardRef { agent: self.agent, guard };
        match self.guards.lock().remove(&guard) {
            Some(cell) => Ok(cell),
            None if guard != 0 && guard < self.next_guard.load(Ordering::Relaxed) => {
                Err(ProtocolError::AlreadyReleased(g))
            }
            None => Err(ProtocolError::UnknownGuard(g)),
        }
    }

    /// Fills a slot and returns the guard it belongs to.
    pub fn write_slot(&self, slot: u64, payload: Vec<u8>) -> Result<GuardRef, ProtocolError> {
        let s = ResultSlot { agent: self.agent, slot };
        match self.slots.lock().remove(&slot) {
            Some(cell) => {
                *cell.value.lock() = Some(payload);
                Ok(cell.guard)
            }
            None if slot != 0 && slot < self.next_slot.load(Ordering::Relaxed) => Err(ProtocolError::SlotWrittenTwice(s)),
            None => Err(ProtocolError::UnknownSlot(s)),
        }
    }

    /// Drops a slot that will never be written (error replies skip
    /// by-reference write-backs).
    pub fn forget_slot(&self, slot: u64) {
        self.slots.lock().remove(&slot);
    }

    pub fn outstanding_guards(&self) -> usize {
        self.guards.lock().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread;

    #[test]
    fn release_before_wait_is_not_lost() {
        let table = GuardTable::new(AgentId(1));
        let (g, cell) = table.new_guard();
        table.take(g.guard).unwrap().release();
        assert!(cell.wait(Some(Duration::from_millis(1))));
    }

    #[test]
    fn second_release_and_unknown_release_are_distinguished() {
        let table = GuardTable::new(AgentId(3));
        let (g, _) = table.new_guard();
        table.take(g.guard).unwrap().release();
        assert_eq!(table.take(g.guard).err(), Some(ProtocolError::AlreadyReleased(g)));
        let unknown = GuardRef { agent: AgentId(3), guard: 99 };
        assert_eq!(table.take(99).err(), Some(ProtocolError::UnknownGuard(unknown)));
        assert_eq!(table.outstanding_guards(), 0);
    }

    #[test]
    fn slot_written_once() {
        let table = GuardTable::new(AgentId(2));
        let (g, _) = table.new_guard();
        let (s, cell) = table.new_slot(g);
        assert_eq!(table.write_slot(s.slot, vec![1, 2]).unwrap(), g);
        assert_eq!(cell.get(), Some(vec![1, 2]));
        assert_eq!(table.write_slot(s.slot, vec![3]).unwrap_err(), ProtocolError::SlotWrittenTwice(s));
        assert!(matches!(table.write_slot(77, vec![]), Err(ProtocolError::UnknownSlot(_))));
    }

    #[test]
    fn all_waiters_resume() {
        let table = GuardTable::new(AgentId(1));
        let (g, cell) = table.new_guard();
        let waiters: Vec<_> = (0..8)
            .map(|_| {
                let c = cell.clone();
                thread::spawn(move || c.wait(Some(Duration::from_secs(10))))
            })
            .collect();
        thread::sleep(Duration::from_millis(10));
        table.take(g.guard).unwrap().release();
        assert!(waiters.into_iter().all(|w| w.join().unwrap()));
    }

    #[test]
    fn wait_times_out() {
        let cell = GuardCell::default();
        assert!(!cell.wait(Some(Duration::from_millis(5))));
        assert!(!cell.is_released());
    }
}
