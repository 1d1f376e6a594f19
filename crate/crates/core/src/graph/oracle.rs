use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};

use super::{Dsu, Forest, KeyBound, NodeId, WeightKey, WeightedGraph};

/// Unique minimum spanning forest under key order.
pub fn kruskal_mst(graph: &WeightedGraph) -> Forest {
    let mut edges = graph.edges().to_vec();
    edges.sort_unstable();
    let mut dsu = Dsu::new(graph.n());
    let kept: Vec<WeightKey> = edges.into_iter().filter(|e| dsu.union(e.lo as usize, e.hi as usize)).collect();
    Forest(WeightedGraph::from_keys(graph.n(), kept))
}

/// Prim's algorithm restarted from every unvisited node. Shares no code with
/// [`kruskal_mst`] so the two can cross-check each other.
pub fn prim_msf(graph: &WeightedGraph) -> Forest {
    let n = graph.n();
    let mut in_tree = vec![false; n];
    let mut kept = Vec::with_capacity(n.saturating_sub(1));
    let mut heap: BinaryHeap<Reverse<(WeightKey, NodeId)>> = BinaryHeap::new();
    for root in 0..n {
        if in_tree[root] {
            continue;
        }
        in_tree[root] = true;
        for e in graph.incident(root as NodeId) {
            heap.push(Reverse((*e, e.other(root as NodeId))));
        }
        while let Some(Reverse((e, to))) = heap.pop() {
            if in_tree[to as usize] {
                continue;
            }
            in_tree[to as usize] = true;
            kept.push(e);
            for f in graph.incident(to) {
                let next = f.other(to);
                if !in_tree[next as usize] {
                    heap.push(Reverse((*f, next)));
                }
            }
        }
    }
    Forest(WeightedGraph::from_keys(n, kept))
}

/// Rooted view of a forest answering path-maximum queries by walking parent
/// pointers.
#[derive(Clone, Debug)]
pub struct ForestIndex {
    parent: Vec<Option<(NodeId, WeightKey)>>,
    depth: Vec<u32>,
    root: Vec<NodeId>,
}

impl ForestIndex {
    pub fn new(forest: &Forest) -> Self {
        let n = forest.n();
        let mut parent = vec![None; n];
        let mut depth = vec![0u32; n];
        let mut root = vec![NodeId::MAX; n];
        let mut stack = Vec::new();
        for r in 0..n as NodeId {
            if root[r as usize] != NodeId::MAX {
                continue;
            }
            root[r as usize] = r;
            stack.push(r);
            while let Some(x) = stack.pop() {
                for e in forest.incident(x) {
                    let y = e.other(x);
                    if root[y as usize] == NodeId::MAX {
                        root[y as usize] = r;
                        parent[y as usize] = Some((x, *e));
                        depth[y as usize] = depth[x as usize] + 1;
                        stack.push(y);
                    }
                }
            }
        }
        Self { parent, depth, root }
    }

    pub fn same_tree(&self, u: NodeId, v: NodeId) -> bool {
        self.root[u as usize] == self.root[v as usize]
    }

    /// Largest key on the forest path between `u` and `v`, or infinity when
    /// they lie in different trees.
    pub fn path_max(&self, mut u: NodeId, mut v: NodeId) -> KeyBound {
        if !self.same_tree(u, v) {
            return KeyBound::Infinite;
        }
        let mut best: Option<WeightKey> = None;
        let climb = |x: &mut NodeId, best: &mut Option<WeightKey>| {
            let (p, key) = self.parent[*x as usize].expect("non-root has a parent");
            *best = Some(best.map_or(key, |b| b.max(key)));
            *x = p;
        };
        while self.depth[u as usize] > self.depth[v as usize] {
            climb(&mut u, &mut best);
        }
        while self.depth[v as usize] > self.depth[u as usize] {
            climb(&mut v, &mut best);
        }
        while u != v {
            climb(&mut u, &mut best);
            climb(&mut v, &mut best);
        }
        match best {
            Some(k) => KeyBound::Finite(k),
            // u == v: an empty path. Callers guarantee u != v.
            None => KeyBound::Infinite,
        }
    }
}

pub fn forest_path_max(forest: &Forest, u: NodeId, v: NodeId) -> KeyBound {
    ForestIndex::new(forest).path_max(u, v)
}

/// Every edge whose key does not exceed the forest path maximum between its
/// endpoints (the F-light edges).
pub fn brute_force_f_light(graph: &WeightedGraph, forest: &Forest) -> HashSet<WeightKey> {
    let index = ForestIndex::new(forest);
    graph.edges().iter().filter(|e| index.path_max(e.lo, e.hi).admits(e)).copied().collect()
}
