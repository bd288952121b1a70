use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU8, Ordering};
use thiserror::Error;

/// How remote operations relate to the statements after them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ExecMode {
    /// Issue immediately; block only when a result is first read or a
    /// barrier drains.
    #[default]
    CausalAsync,
    /// Wait for every remote operation before the next statement.
    DistributedSequential,
}

impl FromStr for ExecMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "causal" | "causal-async" => Ok(ExecMode::CausalAsync),
            "seq" | "sequential" | "distributed-sequential" => Ok(ExecMode::DistributedSequential),
            other => Err(format!("unknown mode `{other}` (expected causal or seq)")),
        }
    }
}

impl fmt::Display for ExecMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExecMode::CausalAsync => "causal",
            ExecMode::DistributedSequential => "seq",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModeError {
    #[error("execution mode already set")]
    AlreadySet,
    #[error("execution mode cannot change after the application has started")]
    Started,
    #[error("execution mode of agent processes is fixed at launch")]
    Fixed,
}

/// Per-run execution mode. It may be set once, before the first remote
/// operation is issued.
pub(crate) struct ModeCell {
    mode: AtomicU8,
    set: AtomicBool,
    started: AtomicBool,
}

impl ModeCell {
    pub fn new(mode: ExecMode) -> Self {
        ModeCell { mode: AtomicU8::new(mode as u8), set: AtomicBool::new(false), started: AtomicBool::new(false) }
    }

    pub fn get(&self) -> ExecMode {
        match self.mode.load(Ordering::Acquire) {
            0 => ExecMode::CausalAsync,
            _ => ExecMode::DistributedSequential,
        }
    }

    pub fn set(&self, mode: ExecMode) -> Result<(), ModeError> {
        if self.started.load(Ordering::Acquire) {
            return Err(ModeError::Started);
        }
        if self.set.swap(true, Ordering::AcqRel) {
            return Err(ModeError::AlreadySet);
        }
        self.mode.store(mode as u8, Ordering::Release);
        Ok(())
    }

    pub fn mark_started(&self) {
        self.started.store(true, Ordering::Release);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_once_before_start() {
        let cell = ModeCell::new(ExecMode::CausalAsync);
        cell.set(ExecMode::DistributedSequential).unwrap();
        assert_eq!(cell.get(), ExecMode::DistributedSequential);
        assert_eq!(cell.set(ExecMode::CausalAsync), Err(ModeError::AlreadySet));
        let cell = ModeCell::new(ExecMode::CausalAsync);
        cell.mark_started();
        assert_eq!(cell.set(ExecMode::DistributedSequential), Err(ModeError::Started));
    }

    #[test]
    fn parses_names() {
        assert_eq!("seq".parse::<ExecMode>().unwrap(), ExecMode::DistributedSequential);
        assert_eq!("causal".parse::<ExecMode>().unwrap(), ExecMode::CausalAsync);
        assert!("fast".parse::<ExecMode>().is_err());
    }
}
