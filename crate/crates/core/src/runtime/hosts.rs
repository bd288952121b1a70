//! Name-to-agent directory behind `create_host`.
//!
//! Names are assigned to agents round-robin in the order they are first
//! requested; asking again for a known name returns the same agent.

use crate::transport::AgentAddress;
use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct HostDirectory {
    agents: Vec<AgentAddress>,
    assigned: HashMap<String, usize>,
    load: Vec<usize>,
    next: usize,
    capacity: Option<usize>,
}

impl HostDirectory {
    /// `capacity` bounds the number of names per agent; `None` is unbounded.
    pub fn new(agents: Vec<AgentAddress>, capacity: Option<usize>) -> Self {
        let load = vec![0; agents.len()];
        HostDirectory { agents, assigned: HashMap::new(), load, next: 0, capacity }
    }

    pub fn resolve(&mut self, name: &str) -> Result<AgentAddress, String> {
        if let Some(&i) = self.assigned.get(name) {
            return Ok(self.agents[i].clone());
        }
        if self.agents.is_empty() {
            return Err("cluster has no agents".into());
        }
        let i = self.next % self.agents.len();
        if let Some(cap) = self.capacity {
            if self.load[i] >= cap {
                return Err(format!(
                    "no capacity for host `{name}`: {} agents already hold {cap} hosts each",
                    self.agents.len()
                ));
            }
        }
        self.next += 1;
        self.load[i] += 1;
        self.assigned.insert(name.to_string(), i);
        log::info!("host `{name}` -> {}", self.agents[i].agent);
        Ok(self.agents[i].clone())
    }

    /// Name assignments so far, sorted by name.
    pub fn assignments(&self) -> Vec<(String, AgentAddress)> {
        let mut out: Vec<_> = self.assigned.iter().map(|(n, &i)| (n.clone(), self.agents[i].clone())).collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::AgentId;

    fn agents(n: u64) -> Vec<AgentAddress> {
        (1..=n).map(|i| AgentAddress { agent: AgentId(i), endpoint: format!("inproc:{i}") }).collect()
    }

    #[test]
    fn same_name_same_agent() {
        let mut d = HostDirectory::new(agents(3), None);
        let a = d.resolve("machine1").unwrap();
        d.resolve("machine2").unwrap();
        assert_eq!(d.resolve("machine1").unwrap(), a);
    }

    #[test]
    fn sixteen_names_on_eight_agents() {
        let mut d = HostDirectory::new(agents(8), None);
        let mut counts = [0usize; 9];
        for i in 0..16 {
            counts[d.resolve(&format!("h{i}")).unwrap().agent.0 as usize] += 1;
        }
        assert_eq!(&counts[1..], &[2; 8]);
    }

    #[test]
    fn single_agent_and_capacity() {
        let mut d = HostDirectory::new(agents(1), Some(2));
        assert_eq!(d.resolve("a").unwrap().agent, AgentId(1));
        assert_eq!(d.resolve("b").unwrap().agent, AgentId(1));
        assert!(d.resolve("c").unwrap_err().contains("no capacity"));
        assert_eq!(d.resolve("a").unwrap().agent, AgentId(1));
    }
}
