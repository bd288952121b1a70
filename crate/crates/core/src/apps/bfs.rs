//! Partitioned breadth-first search.
//!
//! The graph is split into `N` contiguous vertex ranges, one `GraphPart`
//! object per range. Every iteration each part sorts the edges leaving its
//! frontier into `N` edge lists and sends list `j` to part `j` inside a
//! barrier; afterwards each part asks every part whether its next frontier
//! is empty (`N²` queries) and the answers are ANDed into `finished`.
//! Iterations are strictly sequential since each depends on `finished`.
//!
//! Candidate parents arriving during an iteration are buffered by iteration
//! parity and the smallest candidate wins when the buffer is promoted, so
//! the tree does not depend on message arrival order.

use crate::api::{Ctx, Future, Params, RemoteError};
use crate::runtime::{AppError, KindDescriptor, KindRegistry, RegistryError};
use crate::wire::{KindId, MethodId, RemoteRef};
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet, VecDeque};
use std::path::Path;

pub type VertexId = u32;

pub const GRAPH_PART_KIND: KindId = KindId(0x0200);
pub const SET_PEERS: MethodId = MethodId(1);
pub const SET_ROOT: MethodId = MethodId(2);
pub const BUILD_STEP: MethodId = MethodId(3);
pub const SET_PARENTS: MethodId = MethodId(4);
pub const IS_EMPTY_FRONTIER: MethodId = MethodId(5);
pub const ALL_FRONTIERS_EMPTY: MethodId = MethodId(6);
pub const RESULT: MethodId = MethodId(7);

/// Undirected graph as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<VertexId>>,
}

impl Graph {
    /// Builds an undirected graph; self loops and duplicate edges are
    /// dropped.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (VertexId, VertexId)>) -> Graph {
        let mut adj = vec![Vec::new(); n];
        for (u, v) in edges {
            if u != v {
                adj[u as usize].push(v);
                adj[v as usize].push(u);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Graph { adj }
    }

    pub fn path(n: usize) -> Graph {
        Graph::from_edges(n, (1..n as VertexId).map(|v| (v - 1, v)))
    }

    pub fn star(n: usize) -> Graph {
        Graph::from_edges(n, (1..n as VertexId).map(|v| (0, v)))
    }

    /// Uniform random graph with `n * mean_degree / 2` distinct edges.
    pub fn erdos_renyi(n: usize, mean_degree: f64, seed: u64) -> Graph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let max_edges = n * n.saturating_sub(1) / 2;
        let m = ((n as f64 * mean_degree / 2.0).round() as usize).min(max_edges);
        let mut seen = HashSet::with_capacity(m);
        let mut edges = Vec::with_capacity(m);
        while edges.len() < m {
            let u = rng.gen_range(0..n as VertexId);
            let v = rng.gen_range(0..n as VertexId);
            if u != v && seen.insert((u.min(v), u.max(v))) {
                edges.push((u, v));
            }
        }
        Graph::from_edges(n, edges)
    }

    /// Parses "u v" lines; blank lines and lines starting with `#` are
    /// skipped. The vertex count is one more than the largest id.
    pub fn parse_edge_list(text: &str) -> Result<Graph, String> {
        let mut edges = Vec::new();
        let mut n = 0usize;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let mut vertex = || -> Result<VertexId, String> {
                it.next()
                    .ok_or_else(|| format!("line {}: expected two vertex ids", i + 1))?
                    .parse()
                    .map_err(|e| format!("line {}: {e}", i + 1))
            };
            let (u, v) = (vertex()?, vertex()?);
            if it.next().is_some() {
                return Err(format!("line {}: expected two vertex ids", i + 1));
            }
            n = n.max(u.max(v) as usize + 1);
            edges.push((u, v));
        }
        Ok(Graph::from_edges(n, edges))
    }

    pub fn load_edge_list(path: &Path) -> Result<Graph, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Graph::parse_edge_list(&text)
    }

    pub fn vertices(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        &self.adj[v as usize]
    }

    pub fn has_edge(&self, u: VertexId, v: VertexId) -> bool {
        (u as usize) < self.adj.len() && self.adj[u as usize].binary_search(&v).is_ok()
    }
}

/// Block partition of `0..vertices` into `parts` ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub vertices: u64,
    pub parts: u64,
}

impl Partition {
    fn chunk(&self) -> u64 {
        self.vertices.div_ceil(self.parts).max(1)
    }

    pub fn owner(&self, v: VertexId) -> usize {
        ((v as u64 / self.chunk()).min(self.parts - 1)) as usize
    }

    pub fn range(&self, part: usize) -> std::ops::Range<u64> {
        let c = self.chunk();
        let start = (part as u64 * c).min(self.vertices);
        let end = if part as u64 + 1 == self.parts { self.vertices } else { ((part as u64 + 1) * c).min(self.vertices) };
        start..end
    }
}

/// Tree edges `(parent, child)` destined for one part.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeList {
    pub edges: Vec<(VertexId, VertexId)>,
}

#[derive(Serialize, Deserialize)]
struct PartInit {
    id: u64,
    partition: Partition,
    adjacency: Vec<Vec<VertexId>>,
}

pub struct GraphPart {
    id: usize,
    partition: Partition,
    start: u64,
    adjacency: Vec<Vec<VertexId>>,
    state: Mutex<PartState>,
}

struct PartState {
    peers: Vec<RemoteRef>,
    parent: Vec<i64>,
    frontier: Vec<VertexId>,
    next: [BTreeMap<VertexId, VertexId>; 2],
}

impl GraphPart {
    fn local(&self, v: VertexId) -> Result<usize, AppError> {
        let i = (v as u64).checked_sub(self.start).filter(|&i| (i as usize) < self.adjacency.len());
        i.map(|i| i as usize)
            .ok_or_else(|| AppError::out_of_range(format!("vertex {v} not owned by part {}", self.id)))
    }

    fn set_root(&self, root: VertexId) -> Result<(), AppError> {
        if root as u64 >= self.partition.vertices {
            return Err(AppError::out_of_range(format!("root {root} outside 0..{}", self.partition.vertices)));
        }
        let mut s = self.state.lock();
        s.parent.iter_mut().for_each(|p| *p = -1);
        s.frontier.clear();
        s.next.iter_mut().for_each(BTreeMap::clear);
        if self.partition.owner(root) == self.id {
            let i = self.local(root)?;
            s.parent[i] = root as i64;
            s.frontier.push(root);
        }
        Ok(())
    }

    /// Promotes the buffer filled during the previous step and sorts the
    /// frontier's edges by owning part.
    fn sort_frontier_edges(&self, step: u64) -> Result<(Vec<RemoteRef>, Vec<EdgeList>), AppError> {
        let mut s = self.state.lock();
        if step > 0 {
            let promoted = std::mem::take(&mut s.next[((step - 1) % 2) as usize]);
            s.frontier.clear();
            for (v, p) in promoted {
                let i = self.local(v)?;
                if s.parent[i] < 0 {
                    s.parent[i] = p as i64;
                    s.frontier.push(v);
                }
            }
        }
        let mut lists = vec![EdgeList::default(); self.partition.parts as usize];
        for &u in &s.frontier {
            for &v in &self.adjacency[self.local(u)?] {
                lists[self.partition.owner(v)].edges.push((u, v));
            }
        }
        if s.peers.len() != lists.len() {
            return Err(AppError::new(format!("part {} has {} peers, expected {}", self.id, s.peers.len(), lists.len())));
        }
        Ok((s.peers.clone(), lists))
    }

    fn set_parents(&self, step: u64, list: EdgeList) -> Result<(), AppError> {
        let mut s = self.state.lock();
        for (u, v) in list.edges {
            let i = self.local(v)?;
            if s.parent[i] < 0 {
                s.next[(step % 2) as usize].entry(v).and_modify(|p| *p = (*p).min(u)).or_insert(u);
            }
        }
        Ok(())
    }
}

pub fn register(kinds: &mut KindRegistry) -> Result<(), RegistryError> {
    let desc = KindDescriptor::builder(GRAPH_PART_KIND, "GraphPart", |_, args| {
        let init: PartInit = args.get(0)?;
        let range = init.partition.range(init.id as usize);
        if init.adjacency.len() as u64 != range.end - range.start {
            return Err(AppError::new("adjacency does not match the part's vertex range"));
        }
        Ok(GraphPart {
            id: init.id as usize,
            partition: init.partition,
            start: range.start,
            state: Mutex::new(PartState {
                peers: Vec::new(),
                parent: vec![-1; init.adjacency.len()],
                frontier: Vec::new(),
                next: [BTreeMap::new(), BTreeMap::new()],
            }),
            adjacency: init.adjacency,
        })
    })
    .shared_method(SET_PEERS, |g: &GraphPart, _, args| {
        g.state.lock().peers = args.get(0)?;
        Ok(())
    })
    .shared_method(SET_ROOT, |g: &GraphPart, _, args| g.set_root(args.get(0)?))
    .shared_method(BUILD_STEP, |g: &GraphPart, ctx, args| {
        let step: u64 = args.get(0)?;
        let (peers, lists) = g.sort_frontier_edges(step)?;
        ctx.barrier(|c| {
            for (peer, list) in peers.iter().zip(&lists) {
                c.invoke::<()>(peer, SET_PARENTS, Params::new().arg(&step).arg(list));
            }
        })?;
        Ok(())
    })
    .shared_method(SET_PARENTS, |g: &GraphPart, _, args| g.set_parents(args.get(0)?, args.get(1)?))
    .shared_method(IS_EMPTY_FRONTIER, |g: &GraphPart, _, args| {
        let step: u64 = args.get(0)?;
        Ok(g.state.lock().next[(step % 2) as usize].is_empty())
    })
    .shared_method(ALL_FRONTIERS_EMPTY, |g: &GraphPart, ctx, args| {
        let step: u64 = args.get(0)?;
        let peers = g.state.lock().peers.clone();
        let answers: Vec<Future<bool>> =
            peers.iter().map(|p| ctx.invoke(p, IS_EMPTY_FRONTIER, Params::new().arg(&step))).collect();
        let mut finished = true;
        for a in answers {
            finished &= a.get()?;
        }
        Ok(finished)
    })
    .shared_method(RESULT, |g: &GraphPart, _, _| Ok((g.start, g.state.lock().parent.clone())))
    .build();
    kinds.register(desc)?;
    Ok(())
}

/// Constructs one `GraphPart` per partition range, part `i` on agent
/// `i mod agents`, and connects them.
pub fn distribute(ctx: &Ctx, graph: &Graph, parts: usize) -> Result<Vec<RemoteRef>, RemoteError> {
    if parts == 0 {
        return Err(RemoteError::Usage("at least one graph part is required".into()));
    }
    let partition = Partition { vertices: graph.vertices() as u64, parts: parts as u64 };
    let hosts = ctx.agents();
    let refs = ctx.barrier(|c| {
        (0..parts)
            .map(|i| {
                let r = partition.range(i);
                let init = PartInit {
                    id: i as u64,
                    partition,
                    adjacency: graph.adj[r.start as usize..r.end as usize].to_vec(),
                };
                c.construct(hosts[i % hosts.len()].agent, GRAPH_PART_KIND, Params::new().arg(&init))
            })
            .collect::<Vec<_>>()
    })?;
    let refs = refs.iter().map(Future::get).collect::<Result<Vec<_>, _>>()?;
    ctx.barrier(|c| {
        for r in &refs {
            c.invoke::<()>(r, SET_PEERS, Params::new().arg(&refs));
        }
    })?;
    Ok(refs)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BfsRun {
    /// Parent of every vertex, `-1` when unreached; the root is its own
    /// parent.
    pub parents: Vec<i64>,
    /// While-loop iterations, including the final one that found every
    /// frontier empty.
    pub iterations: usize,
}

/// Builds the BFS tree rooted at `root` over distributed parts.
pub fn graph_build_tree(ctx: &Ctx, parts: &[RemoteRef], vertices: usize, root: VertexId) -> Result<BfsRun, RemoteError> {
    if root as usize >= vertices {
        return Err(RemoteError::Usage(format!("root {root} outside 0..{vertices}")));
    }
    ctx.barrier(|c| {
        for p in parts {
            c.invoke::<()>(p, SET_ROOT, Params::new().arg(&root));
        }
    })?;
    let mut iterations = 0;
    for step in 0..=vertices as u64 {
        ctx.barrier(|c| {
            for p in parts {
                c.invoke::<()>(p, BUILD_STEP, Params::new().arg(&step));
            }
        })?;
        let answers = ctx.barrier(|c| {
            parts.iter().map(|p| c.invoke::<bool>(p, ALL_FRONTIERS_EMPTY, Params::new().arg(&step))).collect::<Vec<_>>()
        })?;
        iterations += 1;
        let mut finished = true;
        for a in &answers {
            finished &= a.get()?;
        }
        if finished {
            break;
        }
    }
    let pieces = ctx.barrier(|c| {
        parts.iter().map(|p| c.invoke::<(u64, Vec<i64>)>(p, RESULT, Params::new())).collect::<Vec<_>>()
    })?;
    let mut parents = vec![-1; vertices];
    for piece in pieces {
        let (start, values) = piece.get()?;
        parents[start as usize..start as usize + values.len()].copy_from_slice(&values);
    }
    Ok(BfsRun { parents, iterations })
}

/// Sequential BFS levels, `-1` for unreachable vertices.
pub fn bfs_levels(graph: &Graph, root: VertexId) -> Vec<i64> {
    let mut level = vec![-1; graph.vertices()];
    let mut queue = VecDeque::new();
    level[root as usize] = 0;
    queue.push_back(root);
    while let Some(u) = queue.pop_front() {
        for &v in graph.neighbors(u) {
            if level[v as usize] < 0 {
                level[v as usize] = level[u as usize] + 1;
                queue.push_back(v);
            }
        }
    }
    level
}

/// Levels implied by a parent array, `-1` for vertices without a parent
/// or on a parent cycle.
pub fn tree_levels(parents: &[i64], root: VertexId) -> Vec<i64> {
    let n = parents.len();
    let mut level = vec![-1i64; n];
    if (root as usize) < n && parents[root as usize] == root as i64 {
        level[root as usize] = 0;
    }
    for start in 0..n {
        let mut chain = Vec::new();
        let mut v = start;
        while level[v] < 0 && parents[v] >= 0 && (parents[v] as usize) < n && chain.len() <= n {
            chain.push(v);
            v = parents[v] as usize;
        }
        if level[v] >= 0 {
            let mut l = level[v];
            for &u in chain.iter().rev() {
                l += 1;
                level[u] = l;
            }
        }
    }
    level
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: &'static str,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    /// Levels implied by the tree.
    pub levels: Vec<i64>,
    pub oracle_levels: Vec<i64>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.failures.is_empty())
    }

    pub fn levels_match_oracle(&self) -> bool {
        self.levels == self.oracle_levels
    }

    pub fn failures(&self) -> impl Iterator<Item = String> + '_ {
        self.checks.iter().flat_map(|c| c.failures.iter().map(move |f| format!("{}: {f}", c.name)))
    }
}

/// Vertex count per level, index = level.
pub fn level_histogram(levels: &[i64]) -> Vec<usize> {
    let mut h = Vec::new();
    for &l in levels.iter().filter(|&&l| l >= 0) {
        if h.len() <= l as usize {
            h.resize(l as usize + 1, 0);
        }
        h[l as usize] += 1;
    }
    h
}

const MAX_LISTED: usize = 10;

fn push_limited(list: &mut Vec<String>, total: &mut usize, msg: impl FnOnce() -> String) {
    *total += 1;
    if list.len() < MAX_LISTED {
        list.push(msg());
    }
}

/// Graph500-style validation of a parent array.
pub fn bfs_validate(graph: &Graph, parents: &[i64], root: VertexId) -> ValidationReport {
    let n = graph.vertices();
    let oracle = bfs_levels(graph, root);
    let levels = tree_levels(parents, root);
    let mut root_check = Vec::new();
    if parents.get(root as usize) != Some(&(root as i64)) {
        root_check.push(format!("root {root} has parent {:?}", parents.get(root as usize)));
    }
    if parents.len() != n {
        root_check.push(format!("parent array has {} entries for {n} vertices", parents.len()));
    }
    let (mut edges, mut edge_total) = (Vec::new(), 0);
    let (mut lev, mut lev_total) = (Vec::new(), 0);
    let (mut reach, mut reach_total) = (Vec::new(), 0);
    for (v, &p) in parents.iter().enumerate().take(n) {
        let v32 = v as VertexId;
        if p >= 0 && v32 != root {
            let p32 = p as VertexId;
            if !graph.has_edge(p32, v32) {
                push_limited(&mut edges, &mut edge_total, || format!("tree edge ({p}, {v}) not in graph"));
            }
            if (p as usize) >= n || oracle[p as usize] < 0 || oracle[v] != oracle[p as usize] + 1 {
                let pl = oracle.get(p as usize).copied().unwrap_or(-1);
                push_limited(&mut lev, &mut lev_total, || {
                    format!("vertex {v} at level {} has parent {p} at level {pl}", oracle[v])
                });
            } else if levels[v] < 0 {
                push_limited(&mut lev, &mut lev_total, || format!("vertex {v} is not connected to the root through the tree"));
            }
        }
        if (p >= 0) != (oracle[v] >= 0) {
            push_limited(&mut reach, &mut reach_total, || {
                if p >= 0 {
                    format!("vertex {v} has a parent but is unreachable")
                } else {
                    format!("vertex {v} is reachable but has no parent")
                }
            });
        }
    }
    for (list, total) in [(&mut edges, edge_total), (&mut lev, lev_total), (&mut reach, reach_total)] {
        if total > list.len() {
            list.push(format!("{} more", total - list.len()));
        }
    }
    ValidationReport {
        checks: vec![
            Check { name: "root is its own parent", failures: root_check },
            Check { name: "tree edges exist in graph", failures: edges },
            Check { name: "child level is parent level plus one", failures: lev },
            Check { name: "reachable vertices have parents", failures: reach },
        ],
        levels,
        oracle_levels: oracle,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_covers_every_vertex_once() {
        for (n, parts) in [(4u64, 2u64), (10, 3), (4096, 4), (3, 5)] {
            let p = Partition { vertices: n, parts };
            let mut next = 0;
            for i in 0..parts as usize {
                let r = p.range(i);
                assert_eq!(r.start, next);
                for v in r.clone() {
                    assert_eq!(p.owner(v as VertexId), i);
                }
                next = r.end;
            }
            assert_eq!(next, n);
        }
    }

    #[test]
    fn path_levels_and_validation() {
        let g = Graph::path(4);
        assert_eq!(bfs_levels(&g, 0), vec![0, 1, 2, 3]);
        let report = bfs_validate(&g, &[0, 0, 1, 2], 0);
        assert!(report.passed(), "{:?}", report.checks);
        assert!(report.levels_match_oracle());
    }

    #[test]
    fn fabricated_edge_is_named() {
        let g = Graph::path(4);
        let report = bfs_validate(&g, &[0, 0, 1, 0], 0);
        assert!(!report.passed());
        let edge = &report.checks[1];
        assert_eq!(edge.failures, vec!["tree edge (0, 3) not in graph".to_string()]);
    }

    #[test]
    fn missing_parent_and_bad_root() {
        let g = Graph::path(3);
        let report = bfs_validate(&g, &[1, 0, -1], 0);
        assert!(!report.checks[0].failures.is_empty());
        assert!(!report.checks[3].failures.is_empty());
    }

    #[test]
    fn edge_list_parsing() {
        let g = Graph::parse_edge_list("# comment\n0 1\n\n1 2\n2 2\n").unwrap();
        assert_eq!(g.vertices(), 3);
        assert_eq!(g.edge_count(), 2);
        assert!(Graph::parse_edge_list("0\n").is_err());
        assert!(Graph::parse_edge_list("0 x\n").is_err());
        assert!(Graph::parse_edge_list("0 1 2\n").is_err());
    }

    #[test]
    fn erdos_renyi_has_requested_size() {
        let g = Graph::erdos_renyi(4096, 16.0, 7);
        assert_eq!(g.edge_count(), 4096 * 8);
        assert_eq!(g, Graph::erdos_renyi(4096, 16.0, 7));
    }

    #[test]
    fn histogram_counts_levels() {
        assert_eq!(level_histogram(&[0, 1, 1, 2, -1]), vec![1, 2, 1]);
    }
}
