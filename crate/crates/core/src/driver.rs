//! End-to-end MST drivers.
//!
//! `v1`: node 0 shares a random seed `pi`, the nodes learn `m`, sample each
//! edge with probability `sqrt(n/m)` from a k-wise independent family, compute
//! the MST `F` of the sample, the `F`-light edges of `G`, and finally the MST
//! of the light edges. `v2` replaces the MST of the sample by a recursive
//! call with `p = n^(-eps)`, down to inputs with fewer than `c * n^(1+eps)`
//! edges.
//!
//! Every message is sent inside one of the step scopes `pi`, `m-est`,
//! `lm-mst`, `flight` and `final`; the nested scope `d<depth>` records the
//! recursion level.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::flight::{compute_f_light, FlightConfig};
use crate::graph::{Forest, NodeId, WeightKey, WeightedGraph};
use crate::kwise::{default_k, derive_family, edge_field_prime, make_tag, SharedSeed};
use crate::mst::linear_messages_mst;
use crate::protocols::{check_bound, dgs_broadcast, dsg_gather};
use crate::sim::{join_stream, split_stream, BitWriter, Network, Payload};

pub const STEP_PI: &str = "pi";
pub const STEP_MEST: &str = "m-est";
pub const STEP_LMMST: &str = "lm-mst";
pub const STEP_FLIGHT: &str = "flight";
pub const STEP_FINAL: &str = "final";

/// Tag of the sampling family; the shared seed is fresh per level anyway.
const SAMPLE_TAG: u64 = 0x5a;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    V1,
    V2,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "v1" => Ok(Variant::V1),
            "v2" => Ok(Variant::V2),
            other => param(format!("unknown variant {other:?}")),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::V1 => "v1",
            Variant::V2 => "v2",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverConfig {
    pub variant: Variant,
    /// Used by `v2` only.
    pub epsilon: f64,
    /// Base case of `v2`: fewer than `base_c * n^(1+eps)` edges.
    pub base_c: f64,
    pub flight: FlightConfig,
}

impl Default for DriverConfig {
    fn default() -> Self {
        Self { variant: Variant::V1, epsilon: 0.5, base_c: 4.0, flight: FlightConfig::default() }
    }
}

impl DriverConfig {
    pub fn v1() -> Self {
        Self::default()
    }

    pub fn v2(epsilon: f64) -> Self {
        Self { variant: Variant::V2, epsilon, ..Self::default() }
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if self.variant == Variant::V2 && !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return param(format!("epsilon must lie in (0, 1], got {}", self.epsilon));
        }
        if !(self.base_c >= 1.0) {
            return param(format!("base_c must be at least 1, got {}", self.base_c));
        }
        if !(self.flight.kappa > 0.0) {
            return param(format!("kappa must be positive, got {}", self.flight.kappa));
        }
        Ok(())
    }
}

/// What one sampling level saw. Level 0 is the input graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub depth: usize,
    pub m: usize,
    pub p: f64,
    /// Edges of the sampled subgraph.
    pub eh: usize,
    /// Light edges returned for this level.
    pub el: usize,
    pub max_lij: usize,
    pub sample_failures: u64,
    pub misses: u64,
}

#[derive(Clone, Debug)]
pub struct DriverOutcome {
    pub forest: Forest,
    /// `m` as learned by the nodes.
    pub m: usize,
    /// Sampling levels, outermost first; empty when `v2` starts in its base case.
    pub levels: Vec<LevelStats>,
    /// Sampling levels above the base case.
    pub depth: usize,
    /// The outermost level's sample forest and light edges, for oracle checks.
    pub top: Option<TopLevel>,
}

#[derive(Clone, Debug)]
pub struct TopLevel {
    pub sample_forest: Forest,
    pub light: Vec<WeightKey>,
}

#[derive(Default)]
struct Recorder {
    levels: Vec<LevelStats>,
    top: Option<TopLevel>,
}

impl DriverOutcome {
    /// Leaders left with undecoded light edges, over all levels.
    pub fn misses(&self) -> u64 {
        self.levels.iter().map(|l| l.misses).sum()
    }
}

fn depth_scope(depth: usize) -> String {
    format!("d{depth}")
}

/// Node 0 draws `bits` random bits and broadcasts them in `ceil(bits / B)`
/// fragments. Returns the copy every node holds, after checking they agree.
pub fn broadcast_seed(net: &mut Network, bits: usize, draw_tag: u64) -> Result<SharedSeed> {
    let n = net.n();
    let mut rng = ChaCha8Rng::seed_from_u64(make_tag(&[net.config().seed, draw_tag]));
    let pi = SharedSeed::random(&mut rng, bits);
    let pieces = split_stream(pi.words(), bits, net.bandwidth());
    if pieces.len() > n {
        return param(format!("seed of {bits} bits needs {} fragments, more than n = {n}", pieces.len()));
    }
    let all: Vec<NodeId> = (0..n as NodeId).collect();
    let out = dgs_broadcast(net, 0, &pieces, &all)?;
    let copies: Vec<SharedSeed> = out
        .received
        .iter()
        .map(|ps| {
            let (words, b) = join_stream(ps);
            SharedSeed::from_words(words, b)
        })
        .collect();
    if copies.iter().any(|c| *c != pi) {
        return Err(Error::ProtocolFailure("seed copies differ".into()));
    }
    Ok(pi)
}

/// Degrees go to node 0, which broadcasts `m = sum / 2`.
pub fn estimate_m(net: &mut Network, graph: &WeightedGraph) -> Result<usize> {
    let n = net.n();
    let word = net.word_bits();
    let start = net.transcript().messages_total;
    let items: Vec<Vec<Payload>> = (0..n as NodeId)
        .map(|v| {
            let mut w = BitWriter::new();
            w.push(graph.degree(v) as u64, word + 1);
            vec![w.finish()]
        })
        .collect();
    let gathered = dsg_gather(net, &items, &[0])?;
    let mut sum = 0u64;
    for p in &gathered.received[0] {
        sum += p.reader().read(word + 1)?;
    }
    if !sum.is_multiple_of(2) {
        return Err(Error::ProtocolFailure(format!("degree sum {sum} is odd")));
    }
    let mut w = BitWriter::new();
    w.push(sum / 2, 2 * word);
    let all: Vec<NodeId> = (0..n as NodeId).collect();
    let out = dgs_broadcast(net, 0, &[w.finish()], &all)?;
    let mut learned = None;
    for ps in &out.received {
        let m = ps[0].reader().read(2 * word)?;
        if learned.is_some_and(|l| l != m) {
            return Err(Error::ProtocolFailure("nodes learned different m".into()));
        }
        learned = Some(m);
    }
    let spent = net.transcript().messages_total - start;
    check_bound(spent <= (2 * n as u64 + 2) + (1 + n as u64), || format!("estimating m took {spent} messages"))?;
    Ok(learned.unwrap_or(0) as usize)
}

/// Each endpoint decides locally whether to keep an edge; no messages.
/// Fails if the two endpoints of an edge disagree.
pub fn sample_subgraph(graph: &WeightedGraph, seed: &SharedSeed, p: f64, tag: u64) -> Result<WeightedGraph> {
    let n = graph.n();
    let fam = derive_family(seed, default_k(n), edge_field_prime(n), make_tag(&[SAMPLE_TAG, tag]))?;
    let local: Vec<Vec<WeightKey>> = (0..n as NodeId)
        .map(|v| graph.incident(v).iter().filter(|e| fam.bernoulli_sample(e.index(n), p)).copied().collect())
        .collect();
    let mut kept: Vec<WeightKey> =
        local.iter().enumerate().flat_map(|(v, es)| es.iter().filter(move |e| e.lo as usize == v)).copied().collect();
    let mut from_hi: Vec<WeightKey> =
        local.iter().enumerate().flat_map(|(v, es)| es.iter().filter(move |e| e.hi as usize == v)).copied().collect();
    kept.sort_unstable();
    from_hi.sort_unstable();
    if kept != from_hi {
        return Err(Error::ProtocolFailure("endpoints disagree on the sample".into()));
    }
    Ok(WeightedGraph::from_keys(n, kept))
}

/// Runs the configured variant. Messages are recorded in `net`'s transcript
/// under the step scopes.
pub fn run_mst(net: &mut Network, graph: &WeightedGraph, cfg: &DriverConfig) -> Result<DriverOutcome> {
    cfg.validate()?;
    if graph.n() != net.n() {
        return param(format!("graph has {} nodes, network has {}", graph.n(), net.n()));
    }
    let mut rec = Recorder::default();
    let (forest, m) = match cfg.variant {
        Variant::V1 => mst_v1(net, graph, cfg, &mut rec)?,
        Variant::V2 => mst_v2(net, graph, cfg, 0, &mut rec)?,
    };
    let depth = rec.levels.len();
    Ok(DriverOutcome { forest, m, levels: rec.levels, depth, top: rec.top })
}

fn lm_mst(net: &mut Network, step: &str, depth: usize, graph: &WeightedGraph) -> Result<Forest> {
    net.scoped(step, |net| net.scoped(&depth_scope(depth), |net| linear_messages_mst(net, graph).map(|o| o.forest)))
}

/// Shared part of one sampling level: `pi`, the sample, the recursion
/// (or plain MST) on it, the light edges, and the MST of those.
#[allow(clippy::too_many_arguments)]
fn sampling_level(
    net: &mut Network,
    graph: &WeightedGraph,
    cfg: &DriverConfig,
    depth: usize,
    m: usize,
    p: f64,
    rec: &mut Recorder,
    solve_sample: impl FnOnce(&mut Network, &WeightedGraph, &mut Recorder) -> Result<Forest>,
) -> Result<Forest> {
    let n = graph.n();
    let d = depth_scope(depth);
    let pi = net.scoped(STEP_PI, |net| {
        net.scoped(&d, |net| broadcast_seed(net, SharedSeed::default_bits(n), make_tag(&[0x70, depth as u64])))
    })?;
    let before = net.transcript().messages_total;
    let h = if p >= 1.0 { graph.clone() } else { sample_subgraph(graph, &pi, p, depth as u64)? };
    if net.transcript().messages_total != before {
        return Err(Error::ProtocolFailure("sampling sent messages".into()));
    }
    let slot = rec.levels.len();
    rec.levels.push(LevelStats { depth, m, p, eh: h.m(), el: 0, max_lij: 0, sample_failures: 0, misses: 0 });
    let f = solve_sample(net, &h, rec)?;
    let fcfg = FlightConfig { tag: make_tag(&[cfg.flight.tag, depth as u64]), ..cfg.flight.clone() };
    let light = net.scoped(STEP_FLIGHT, |net| net.scoped(&d, |net| compute_f_light(net, graph, &f, p, &pi, &fcfg)))?;
    let stats = &mut rec.levels[slot];
    stats.el = light.light.len();
    stats.max_lij = light.max_found();
    stats.sample_failures = light.sample_failures;
    stats.misses = light.misses;
    if depth == 0 {
        rec.top = Some(TopLevel { sample_forest: f, light: light.light.clone() });
    }
    let el = WeightedGraph::from_keys(n, light.light);
    lm_mst(net, STEP_FINAL, depth, &el)
}

fn mst_v1(net: &mut Network, graph: &WeightedGraph, cfg: &DriverConfig, rec: &mut Recorder) -> Result<(Forest, usize)> {
    let n = graph.n();
    let m = net.scoped(STEP_MEST, |net| net.scoped(&depth_scope(0), |net| estimate_m(net, graph)))?;
    // Sparse inputs: p = 1 and H = G.
    let p = if m == 0 { 1.0 } else { (n as f64 / m as f64).sqrt().min(1.0) };
    let forest = sampling_level(net, graph, cfg, 0, m, p, rec, |net, h, _| lm_mst(net, STEP_LMMST, 0, h))?;
    Ok((forest, m))
}

fn mst_v2(
    net: &mut Network,
    graph: &WeightedGraph,
    cfg: &DriverConfig,
    depth: usize,
    rec: &mut Recorder,
) -> Result<(Forest, usize)> {
    let n = graph.n();
    let m = net.scoped(STEP_MEST, |net| net.scoped(&depth_scope(depth), |net| estimate_m(net, graph)))?;
    if (m as f64) < cfg.base_c * (n as f64).powf(1.0 + cfg.epsilon) {
        return Ok((lm_mst(net, STEP_LMMST, depth, graph)?, m));
    }
    let p = (n as f64).powf(-cfg.epsilon);
    let forest = sampling_level(net, graph, cfg, depth, m, p, rec, |net, h, rec| {
        mst_v2(net, h, cfg, depth + 1, rec).map(|r| r.0)
    })?;
    Ok((forest, m))
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::graph::{generate_graph, kruskal_mst, GraphModel};
    use crate::sim::SimConfig;

    fn net(n: usize, s: u64) -> Network {
        Network::new(SimConfig::new(n, s)).unwrap()
    }

    #[test]
    fn seed_broadcast_costs_k_plus_kn() {
        let mut nw = net(256, 1);
        let bits = 4 * nw.bandwidth();
        broadcast_seed(&mut nw, bits, 0).unwrap();
        let t = nw.transcript();
        assert_eq!((t.rounds, t.messages_total), (2, 4 + 4 * 256));
    }

    #[test]
    fn short_seed_is_one_message_per_node() {
        let mut nw = net(16, 2);
        let pi = broadcast_seed(&mut nw, 20, 0).unwrap();
        assert_eq!(pi.bits(), 20);
        assert_eq!(nw.transcript().messages_total, 1 + 16);
    }

    #[test]
    fn m_of_small_graphs() {
        let k4 = generate_graph(&GraphModel::Complete { n: 4 }, 0).unwrap();
        assert_eq!(estimate_m(&mut net(4, 0), &k4).unwrap(), 6);
        let p5 = generate_graph(&GraphModel::Path { n: 5 }, 0).unwrap();
        assert_eq!(estimate_m(&mut net(5, 0), &p5).unwrap(), 4);
    }

    #[test]
    fn zero_probability_samples_nothing() {
        let g = generate_graph(&GraphModel::Complete { n: 20 }, 0).unwrap();
        let seed = SharedSeed::random(&mut ChaCha8Rng::seed_from_u64(3), SharedSeed::default_bits(20));
        assert_eq!(sample_subgraph(&g, &seed, 0.0, 0).unwrap().m(), 0);
        assert_eq!(sample_subgraph(&g, &seed, 1.0, 0).unwrap().m(), g.m());
    }

    #[test]
    fn tree_input_is_its_own_mst() {
        let g = generate_graph(&GraphModel::Path { n: 30 }, 5).unwrap();
        for cfg in [DriverConfig::v1(), DriverConfig::v2(0.5)] {
            let out = run_mst(&mut net(30, 5), &g, &cfg).unwrap();
            assert_eq!(out.forest.edge_set(), g.edge_set());
        }
    }

    #[test]
    fn v1_matches_kruskal_and_labels_every_message() {
        for s in 0..4 {
            let g = generate_graph(&GraphModel::ErdosRenyi { n: 64, m: 1024 }, s).unwrap();
            let mut nw = net(64, s);
            let out = run_mst(&mut nw, &g, &DriverConfig::v1()).unwrap();
            assert_eq!(out.forest.edge_set(), kruskal_mst(&g).edge_set(), "seed {s}");
            let t = nw.transcript();
            let steps: HashSet<&str> = t.by_step.keys().map(String::as_str).collect();
            assert_eq!(steps, HashSet::from([STEP_PI, STEP_MEST, STEP_LMMST, STEP_FLIGHT, STEP_FINAL]));
            assert_eq!(t.by_step.values().sum::<u64>(), t.messages_total);
            assert_eq!(out.levels.len(), 1);
            let top = out.top.unwrap();
            let light: HashSet<_> = top.light.iter().copied().collect();
            assert_eq!(light, crate::graph::brute_force_f_light(&g, &top.sample_forest));
        }
    }

    #[test]
    fn v2_base_case_is_a_single_mst() {
        let g = generate_graph(&GraphModel::ErdosRenyi { n: 32, m: 100 }, 1).unwrap();
        let mut nw = net(32, 1);
        let out = run_mst(&mut nw, &g, &DriverConfig::v2(0.5)).unwrap();
        assert_eq!(out.depth, 0);
        assert_eq!(nw.transcript().step_messages(STEP_PI), 0);
        assert_eq!(out.forest.edge_set(), kruskal_mst(&g).edge_set());
    }

    #[test]
    fn v2_recurses_on_a_complete_graph() {
        let g = generate_graph(&GraphModel::Complete { n: 128 }, 2).unwrap();
        let mut nw = net(128, 2);
        let out = run_mst(&mut nw, &g, &DriverConfig::v2(0.25)).unwrap();
        assert!(out.depth >= 1 && out.depth <= 4, "depth {}", out.depth);
        assert_eq!(out.forest.edge_set(), kruskal_mst(&g).edge_set());
        for w in out.levels.windows(2) {
            assert_eq!(w[1].depth, w[0].depth + 1);
            assert_eq!(w[1].m, w[0].eh);
        }
    }

    #[test]
    fn bad_epsilon_is_rejected() {
        let g = generate_graph(&GraphModel::Path { n: 4 }, 0).unwrap();
        assert!(run_mst(&mut net(4, 0), &g, &DriverConfig::v2(0.0)).is_err());
        assert!(run_mst(&mut net(4, 0), &g, &DriverConfig::v2(1.5)).is_err());
    }
}
