use crate::api::ExecMode;
use crate::transport::{TransportConfig, TransportKind};
use std::collections::BTreeMap;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("configuration: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone)]
pub struct RuntimeConfig {
    /// Root of all randomness; split per agent.
    pub seed: u64,
    /// Inclusive delay range in microseconds injected before every send and
    /// every execution.
    pub fuzz: Option<(u64, u64)>,
    pub trace: bool,
    /// Upper bound on any single guard wait; `None` waits forever.
    pub wait_timeout: Option<Duration>,
    pub pool_ceiling: usize,
    pub initial_workers: usize,
    /// Maximum number of host names per agent; `None` is unbounded.
    pub host_capacity: Option<usize>,
    pub mode: ExecMode,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            seed: 0,
            fuzz: None,
            trace: true,
            wait_timeout: None,
            pool_ceiling: 1024,
            initial_workers: 4,
            host_capacity: None,
            mode: ExecMode::CausalAsync,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClusterConfig {
    pub agents: usize,
    pub transport: TransportKind,
    pub net: TransportConfig,
    pub runtime: RuntimeConfig,
}

impl ClusterConfig {
    pub fn new(agents: usize, transport: TransportKind) -> Self {
        ClusterConfig { agents, transport, net: TransportConfig::default(), runtime: RuntimeConfig::default() }
    }

    /// Applies `key=value` settings. Known keys: `listen`,
    /// `connect_timeout_ms`, `agent_count`, `seed`, `fuzz` (`MIN:MAX`
    /// microseconds), `trace`, `wait_timeout_ms`, `pool_ceiling`,
    /// `initial_workers`, `host_capacity`, `mode`.
    pub fn apply(&mut self, settings: &BTreeMap<String, String>) -> Result<(), ConfigError> {
        for (key, value) in settings {
            let bad = |what: &str| ConfigError(format!("{key}: {what} `{value}`"));
            let num = || value.parse::<u64>().map_err(|_| bad("expected an unsigned integer, got"));
            match key.as_str() {
                "listen" => self.net.listen = value.clone(),
                "connect_timeout_ms" => self.net.connect_timeout = Duration::from_millis(num()?),
                "agent_count" => {
                    if num()? as usize != self.agents {
                        return Err(ConfigError(format!("agent_count {value} disagrees with {} agents", self.agents)));
                    }
                }
                "seed" => self.runtime.seed = num()?,
                "fuzz" => self.runtime.fuzz = Some(parse_fuzz(value).map_err(ConfigError)?),
                "trace" => self.runtime.trace = value.parse().map_err(|_| bad("expected true or false, got"))?,
                "wait_timeout_ms" => self.runtime.wait_timeout = Some(Duration::from_millis(num()?)),
                "pool_ceiling" => self.runtime.pool_ceiling = num()? as usize,
                "initial_workers" => self.runtime.initial_workers = num()? as usize,
                "host_capacity" => self.runtime.host_capacity = Some(num()? as usize),
                "mode" => self.runtime.mode = value.parse().map_err(ConfigError)?,
                other => return Err(ConfigError(format!("unknown key `{other}`"))),
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.agents == 0 {
            return Err(ConfigError("a cluster needs at least one agent".into()));
        }
        if self.runtime.pool_ceiling == 0 {
            return Err(ConfigError("pool_ceiling must be positive".into()));
        }
        Ok(())
    }
}

/// Parses `MIN:MAX` (or a single value) in microseconds.
pub fn parse_fuzz(s: &str) -> Result<(u64, u64), String> {
    let parse = |p: &str| p.trim().parse::<u64>().map_err(|_| format!("bad fuzz range `{s}` (expected MIN:MAX)"));
    let (lo, hi) = match s.split_once(':') {
        Some((a, b)) => (parse(a)?, parse(b)?),
        None => {
            let v = parse(s)?;
            (v, v)
        }
    };
    if lo > hi {
        return Err(format!("bad fuzz range `{s}`: MIN exceeds MAX"));
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn applies_known_keys() {
        let mut c = ClusterConfig::new(4, TransportKind::Tcp);
        c.apply(&map(&[("listen", "127.0.0.1:0"), ("connect_timeout_ms", "500"), ("fuzz", "0:50"), ("mode", "seq")]))
            .unwrap();
        assert_eq!(c.net.connect_timeout, Duration::from_millis(500));
        assert_eq!(c.runtime.fuzz, Some((0, 50)));
        assert_eq!(c.runtime.mode, ExecMode::DistributedSequential);
    }

    #[test]
    fn rejects_bad_settings() {
        let mut c = ClusterConfig::new(4, TransportKind::InProc);
        assert!(c.apply(&map(&[("colour", "blue")])).is_err());
        assert!(c.apply(&map(&[("agent_count", "3")])).is_err());
        assert!(c.apply(&map(&[("seed", "-1")])).is_err());
        assert!(ClusterConfig::new(0, TransportKind::InProc).validate().is_err());
    }

    #[test]
    fn fuzz_ranges() {
        assert_eq!(parse_fuzz("5").unwrap(), (5, 5));
        assert_eq!(parse_fuzz("1:9").unwrap(), (1, 9));
        assert!(parse_fuzz("9:1").is_err());
        assert!(parse_fuzz("x").is_err());
    }
}
