use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ceil_log2, Dsu, KeyBound, NodeId, WeightKey};

/// `max(1, ceil(log2 n))` lowest ids; commander `i` handles phase `i`.
pub fn select_commanders(n: usize) -> Vec<NodeId> {
    (0..(ceil_log2(n as u64) as usize).max(1).min(n) as NodeId).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanComponent {
    /// Smallest member id.
    pub label: NodeId,
    /// Sorted.
    pub members: Vec<NodeId>,
    /// Lightest F-edge leaving the component; `None` stands for `⊥` with weight `∞`.
    pub mwoe: Option<WeightKey>,
}

impl PlanComponent {
    pub fn bound(&self) -> KeyBound {
        self.mwoe.map_or(KeyBound::Infinite, KeyBound::Finite)
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.members.binary_search(&v).is_ok()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    /// Component index of every node.
    pub component_of: Vec<usize>,
    /// Ordered by label.
    pub components: Vec<PlanComponent>,
}

impl Phase {
    pub fn component(&self, v: NodeId) -> &PlanComponent {
        &self.components[self.component_of[v as usize]]
    }

    /// Whether `e` belongs to `L^i_j` of the component at index `j`: exactly
    /// one endpoint inside and key at most the component's MWOE.
    pub fn in_l_set(&self, j: usize, e: &WeightKey) -> bool {
        let (a, b) = (self.component_of[e.lo as usize] == j, self.component_of[e.hi as usize] == j);
        a != b && self.components[j].bound().admits(e)
    }
}

/// Borůvka on `F`, phase by phase, starting from singletons. A final phase
/// with every MWOE `⊥` is appended when `F` has at least two trees, so that
/// edges between trees are covered.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub n: usize,
    pub phases: Vec<Phase>,
}

impl PhasePlan {
    pub fn simulate(n: usize, forest_edges: &[WeightKey]) -> Result<Self> {
        let mut dsu = Dsu::new(n);
        let mut edges = forest_edges.to_vec();
        edges.sort_unstable();
        edges.dedup();
        if edges.iter().any(|e| e.hi as usize >= n) {
            return Err(Error::Param("forest edge outside the node range".into()));
        }
        let mut phases = Vec::new();
        loop {
            let mut members: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
            for v in 0..n {
                members.entry(dsu.find(v)).or_default().push(v as NodeId);
            }
            let mut mwoe: BTreeMap<usize, WeightKey> = BTreeMap::new();
            for e in &edges {
                let (a, b) = (dsu.find(e.lo as usize), dsu.find(e.hi as usize));
                if a == b {
                    continue;
                }
                for r in [a, b] {
                    mwoe.entry(r).and_modify(|m| *m = (*m).min(*e)).or_insert(*e);
                }
            }
            let mut comps: Vec<(usize, PlanComponent)> = members
                .into_iter()
                .map(|(root, ms)| (root, PlanComponent { label: ms[0], members: ms, mwoe: mwoe.get(&root).copied() }))
                .collect();
            comps.sort_by_key(|c| c.1.label);
            let terminal = mwoe.is_empty();
            if terminal && comps.len() < 2 {
                break;
            }
            let mut component_of = vec![0; n];
            for (j, (_, c)) in comps.iter().enumerate() {
                for &v in &c.members {
                    component_of[v as usize] = j;
                }
            }
            phases.push(Phase { component_of, components: comps.iter().map(|c| c.1.clone()).collect() });
            if terminal {
                break;
            }
            for e in mwoe.values() {
                dsu.union(e.lo as usize, e.hi as usize);
            }
        }
        Ok(PhasePlan { n, phases })
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// Largest `|L^i_j|` and the sizes per phase, computed from the global graph.
    pub fn l_set_sizes(&self, edges: &[WeightKey]) -> Vec<Vec<usize>> {
        self.phases
            .iter()
            .map(|ph| {
                let mut sizes = vec![0; ph.components.len()];
                for e in edges {
                    for x in [e.lo, e.hi] {
                        let j = ph.component_of[x as usize];
                        if ph.in_l_set(j, e) {
                            sizes[j] += 1;
                        }
                    }
                }
                sizes
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(w: u64, a: NodeId, b: NodeId) -> WeightKey {
        WeightKey::new(w, a, b)
    }

    #[test]
    fn commanders_are_lowest_ids() {
        assert_eq!(select_commanders(2), vec![0]);
        assert_eq!(select_commanders(256), (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn single_edge_merges_in_one_phase() {
        let plan = PhasePlan::simulate(2, &[key(5, 0, 1)]).unwrap();
        assert_eq!(plan.len(), 1);
        let ph = &plan.phases[0];
        assert_eq!(ph.components.len(), 2);
        assert!(ph.components.iter().all(|c| c.mwoe == Some(key(5, 0, 1))));
    }

    #[test]
    fn path_of_four() {
        // 0 -1- 1 -2- 2 -3- 3: every node's MWOE is its lighter edge.
        let f = [key(1, 0, 1), key(2, 1, 2), key(3, 2, 3)];
        let plan = PhasePlan::simulate(4, &f).unwrap();
        assert_eq!(plan.len(), 1);
        let mw: Vec<_> = plan.phases[0].components.iter().map(|c| c.mwoe.unwrap().w).collect();
        assert_eq!(mw, vec![1, 1, 2, 3]);
    }

    #[test]
    fn path_needing_two_phases() {
        // Keys 1 < 3 < 2 on 0-1-2-3: phase 0 merges {0,1} and {2,3}.
        let f = [key(1, 0, 1), key(3, 1, 2), key(2, 2, 3)];
        let plan = PhasePlan::simulate(4, &f).unwrap();
        assert_eq!(plan.len(), 2);
        let ph = &plan.phases[1];
        assert_eq!(ph.components.len(), 2);
        assert_eq!(ph.components[1].label, 2);
        assert_eq!(ph.components[0].mwoe, Some(key(3, 1, 2)));
    }

    #[test]
    fn empty_forest_is_one_terminal_phase() {
        let plan = PhasePlan::simulate(3, &[]).unwrap();
        assert_eq!(plan.len(), 1);
        assert!(plan.phases[0].components.iter().all(|c| c.mwoe.is_none() && c.members.len() == 1));
    }

    #[test]
    fn two_trees_get_a_terminal_phase() {
        let plan = PhasePlan::simulate(4, &[key(1, 0, 1), key(2, 2, 3)]).unwrap();
        assert_eq!(plan.len(), 2);
        let last = plan.phases.last().unwrap();
        assert_eq!(last.components.len(), 2);
        assert!(last.components.iter().all(|c| c.mwoe.is_none()));
    }

    /// Five singleton components A, B, C, D, Z (nodes 0..4) merging into two.
    /// A non-forest arc is in a component's L-set exactly when it leaves the
    /// component and is no heavier than the component's MWOE.
    #[test]
    fn five_components_classify_arcs() {
        let f = [key(20, 0, 1), key(21, 2, 3), key(22, 3, 4)];
        let plan = PhasePlan::simulate(5, &f).unwrap();
        let ph = &plan.phases[0];
        let mw: Vec<u64> = ph.components.iter().map(|c| c.mwoe.unwrap().w).collect();
        assert_eq!(mw, vec![20, 20, 21, 21, 22]);
        let solid = key(15, 0, 2);
        let dashed = key(25, 0, 4);
        let dotted = key(21, 1, 4);
        assert!(ph.in_l_set(0, &solid) && ph.in_l_set(2, &solid));
        assert!(!ph.in_l_set(0, &dashed) && !ph.in_l_set(4, &dashed));
        assert!(!ph.in_l_set(1, &dotted) && ph.in_l_set(4, &dotted));
        assert!(!ph.in_l_set(3, &solid));
        assert_eq!(plan.phases.len(), 2);
        let merged: Vec<Vec<NodeId>> = plan.phases[1].components.iter().map(|c| c.members.clone()).collect();
        assert_eq!(merged, vec![vec![0, 1], vec![2, 3, 4]]);
        assert!(plan.phases[1].components.iter().all(|c| c.mwoe.is_none()));
    }
}
