//! Weighted graphs with distinct composite edge keys, plus the sequential
//! oracles every distributed routine is checked against.

mod generate;
pub mod io;
mod oracle;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

pub use generate::{generate_graph, GraphModel};
pub use oracle::{brute_force_f_light, forest_path_max, kruskal_mst, prim_msf, ForestIndex};

pub type NodeId = u32;

/// Composite edge weight `(w, lo, hi)`. Because the endpoints are part of the
/// key, two distinct edges never compare equal, and an edge is identified by
/// its key alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WeightKey {
    pub w: u64,
    pub lo: NodeId,
    pub hi: NodeId,
}

impl WeightKey {
    /// Builds the key of edge `{a, b}` with raw weight `w`; endpoint order is irrelevant.
    pub fn new(w: u64, a: NodeId, b: NodeId) -> Self {
        debug_assert_ne!(a, b);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        Self { w, lo, hi }
    }

    pub fn endpoints(&self) -> (NodeId, NodeId) {
        (self.lo, self.hi)
    }

    /// The endpoint that is not `x`.
    pub fn other(&self, x: NodeId) -> NodeId {
        if x == self.lo {
            self.hi
        } else {
            debug_assert_eq!(x, self.hi);
            self.lo
        }
    }

    pub fn touches(&self, x: NodeId) -> bool {
        self.lo == x || self.hi == x
    }

    /// Position of this edge in the `n * n` incidence index space.
    pub fn index(&self, n: usize) -> u64 {
        edge_index(n, self.lo, self.hi)
    }
}

impl fmt::Display for WeightKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}-{})", self.w, self.lo, self.hi)
    }
}

/// `u * n + v` for `u < v`.
pub fn edge_index(n: usize, u: NodeId, v: NodeId) -> u64 {
    debug_assert!(u < v);
    u as u64 * n as u64 + v as u64
}

/// Inverse of [`edge_index`]; `None` if the index does not name a valid edge.
pub fn decode_edge_index(n: usize, index: u64) -> Option<(NodeId, NodeId)> {
    let n64 = n as u64;
    if index >= n64 * n64 {
        return None;
    }
    let (u, v) = (index / n64, index % n64);
    (u < v).then_some((u as NodeId, v as NodeId))
}

/// A finite key, or the distinguished value above every finite key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KeyBound {
    Finite(WeightKey),
    Infinite,
}

impl KeyBound {
    pub fn admits(&self, key: &WeightKey) -> bool {
        match self {
            KeyBound::Finite(t) => key <= t,
            KeyBound::Infinite => true,
        }
    }

    pub fn finite(&self) -> Option<WeightKey> {
        match self {
            KeyBound::Finite(k) => Some(*k),
            KeyBound::Infinite => None,
        }
    }
}

impl From<WeightKey> for KeyBound {
    fn from(k: WeightKey) -> Self {
        KeyBound::Finite(k)
    }
}

/// Simple undirected graph on nodes `[0, n)`. Adjacency lists are kept sorted
/// by key so nodes can scan incident edges lightest-first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<WeightKey>,
    adj: Vec<Vec<WeightKey>>,
}

impl WeightedGraph {
    /// Ingests raw `(u, v, w)` triples, padding every weight with its endpoint
    /// ids. Rejects self-loops, out-of-range ids and repeated node pairs.
    pub fn from_raw(n: usize, raw: &[(NodeId, NodeId, u64)]) -> Result<Self> {
        pad_weights(n, raw)
    }

    /// Builds a graph from keys that are already known to be valid and distinct
    /// (e.g. a subset of another graph's edges).
    pub fn from_keys(n: usize, keys: impl IntoIterator<Item = WeightKey>) -> Self {
        let edges: Vec<WeightKey> = keys.into_iter().collect();
        let mut adj = vec![Vec::new(); n];
        for e in &edges {
            debug_assert!(e.lo < e.hi && (e.hi as usize) < n);
            adj[e.lo as usize].push(*e);
            adj[e.hi as usize].push(*e);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Self { n, edges, adj }
    }

    pub fn empty(n: usize) -> Self {
        Self::from_keys(n, [])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[WeightKey] {
        &self.edges
    }

    /// Incident edges of `v`, lightest first.
    pub fn incident(&self, v: NodeId) -> &[WeightKey] {
        &self.adj[v as usize]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adj[v as usize].len()
    }

    pub fn contains(&self, key: &WeightKey) -> bool {
        (key.lo as usize) < self.n && self.adj[key.lo as usize].binary_search(key).is_ok()
    }

    pub fn edge_set(&self) -> HashSet<WeightKey> {
        self.edges.iter().copied().collect()
    }

    /// Edges sorted by key; handy for comparing outputs.
    pub fn sorted_edges(&self) -> Vec<WeightKey> {
        let mut e = self.edges.clone();
        e.sort_unstable();
        e
    }

    pub fn subgraph(&self, mut keep: impl FnMut(&WeightKey) -> bool) -> WeightedGraph {
        WeightedGraph::from_keys(self.n, self.edges.iter().copied().filter(|e| keep(e)))
    }

    /// Bits needed to write the largest raw weight (at least 1).
    pub fn weight_bits(&self) -> u32 {
        let max = self.edges.iter().map(|e| e.w).max().unwrap_or(0);
        (64 - max.leading_zeros()).max(1)
    }

    /// Raw `(u, v, w)` triples in edge order.
    pub fn raw_edges(&self) -> Vec<(NodeId, NodeId, u64)> {
        self.edges.iter().map(|e| (e.lo, e.hi, e.w)).collect()
    }
}

/// Pads raw weights with endpoint ids so that all keys are distinct while the
/// order of edges with different raw weights is unchanged.
pub fn pad_weights(n: usize, raw: &[(NodeId, NodeId, u64)]) -> Result<WeightedGraph> {
    let mut seen = HashSet::with_capacity(raw.len());
    let mut keys = Vec::with_capacity(raw.len());
    for &(u, v, w) in raw {
        if u as usize >= n || v as usize >= n {
            return param(format!("edge ({u}, {v}) has an endpoint outside [0, {n})"));
        }
        if u == v {
            return param(format!("self-loop at node {u}"));
        }
        let key = WeightKey::new(w, u, v);
        if !seen.insert((key.lo, key.hi)) {
            return param(format!("duplicate edge ({}, {})", key.lo, key.hi));
        }
        keys.push(key);
    }
    Ok(WeightedGraph::from_keys(n, keys))
}

/// An acyclic [`WeightedGraph`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Forest(WeightedGraph);

impl Forest {
    pub fn new(graph: WeightedGraph) -> Result<Self> {
        let mut dsu = Dsu::new(graph.n());
        for e in graph.edges() {
            if !dsu.union(e.lo as usize, e.hi as usize) {
                return param(format!("edge {e} closes a cycle"));
            }
        }
        Ok(Forest(graph))
    }

    pub fn empty(n: usize) -> Self {
        Forest(WeightedGraph::empty(n))
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.0
    }

    pub fn into_graph(self) -> WeightedGraph {
        self.0
    }

    pub fn total_weight(&self) -> u128 {
        self.0.edges().iter().map(|e| e.w as u128).sum()
    }
}

impl std::ops::Deref for Forest {
    type Target = WeightedGraph;
    fn deref(&self) -> &WeightedGraph {
        &self.0
    }
}

/// Union-find with path halving and union by size.
#[derive(Clone, Debug)]
pub struct Dsu {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl Dsu {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if `a` and `b` were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }

    pub fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }
}

/// Smallest `b` with `2^b >= x` (0 for `x <= 1`).
pub fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}
