use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{pad_weights, NodeId, WeightedGraph};
use crate::error::{param, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GraphModel {
    /// Uniform random simple graph with exactly `m` edges.
    ErdosRenyi {
        n: usize,
        m: usize,
    },
    Complete {
        n: usize,
    },
    Path {
        n: usize,
    },
    Custom {
        n: usize,
        edges: Vec<(NodeId, NodeId, u64)>,
    },
}

impl GraphModel {
    pub fn n(&self) -> usize {
        match self {
            GraphModel::ErdosRenyi { n, .. }
            | GraphModel::Complete { n }
            | GraphModel::Path { n }
            | GraphModel::Custom { n, .. } => *n,
        }
    }
}

/// Raw weights are drawn uniformly from `[1, n^2]`, so they fit in two node-id words.
fn random_weight(rng: &mut impl Rng, n: usize) -> u64 {
    rng.gen_range(1..=(n as u64 * n as u64).max(2))
}

pub fn generate_graph(model: &GraphModel, seed: u64) -> Result<WeightedGraph> {
    let n = model.n();
    if n < 2 {
        return param(format!("need at least 2 nodes, got {n}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = n * (n - 1) / 2;
    let raw: Vec<(NodeId, NodeId, u64)> = match model {
        GraphModel::ErdosRenyi { m, .. } => {
            if *m > pairs {
                return param(format!("m = {m} exceeds n(n-1)/2 = {pairs}"));
            }
            let mut picked: Vec<usize> = sample(&mut rng, pairs, *m).into_vec();
            picked.sort_unstable();
            picked
                .into_iter()
                .map(|p| {
                    let (u, v) = unrank_pair(n, p);
                    (u, v, random_weight(&mut rng, n))
                })
                .collect()
        }
        GraphModel::Complete { .. } => (0..n as NodeId)
            .flat_map(|u| (u + 1..n as NodeId).map(move |v| (u, v)))
            .collect::<Vec<_>>()
            .into_iter()
            .map(|(u, v)| (u, v, random_weight(&mut rng, n)))
            .collect(),
        GraphModel::Path { .. } => (0..n as NodeId - 1).map(|u| (u, u + 1, random_weight(&mut rng, n))).collect(),
        GraphModel::Custom { edges, .. } => {
            let mut seen = HashSet::new();
            for &(u, v, _) in edges {
                if !seen.insert((u.min(v), u.max(v))) {
                    return param(format!("duplicate edge ({u}, {v})"));
                }
            }
            edges.clone()
        }
    };
    pad_weights(n, &raw)
}

/// Maps `p` in `[0, n(n-1)/2)` to the `p`-th pair `(u, v)`, `u < v`, in row-major order.
fn unrank_pair(n: usize, mut p: usize) -> (NodeId, NodeId) {
    let mut u = 0;
    loop {
        let row = n - 1 - u;
        if p < row {
            return (u as NodeId, (u + 1 + p) as NodeId);
        }
        p -= row;
        u += 1;
    }
}
