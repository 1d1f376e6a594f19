use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::graph::{brute_force_f_light, generate_graph, kruskal_mst, GraphModel};
use crate::sim::SimConfig;

fn seed_for(n: usize, s: u64) -> SharedSeed {
    SharedSeed::random(&mut ChaCha8Rng::seed_from_u64(s), SharedSeed::default_bits(n))
}

/// Spanning forest of an independently `p`-sampled subgraph.
fn sampled_forest(g: &WeightedGraph, p: f64, s: u64) -> Forest {
    let mut rng = ChaCha8Rng::seed_from_u64(s ^ 0xf0);
    kruskal_mst(&g.subgraph(|_| rng.gen_bool(p)))
}

fn run(g: &WeightedGraph, f: &Forest, p: f64, s: u64) -> (FlightOutcome, Network) {
    let mut net = Network::new(SimConfig { trace: true, ..SimConfig::new(g.n(), s) }).unwrap();
    let out = compute_f_light(&mut net, g, f, p, &seed_for(g.n(), s), &FlightConfig::default()).unwrap();
    crate::sim::check_link_rule(net.trace().unwrap()).unwrap();
    (out, net)
}

fn as_set(v: &[WeightKey]) -> HashSet<WeightKey> {
    v.iter().copied().collect()
}

#[test]
fn spanning_tree_input_returns_the_tree() {
    let g = generate_graph(&GraphModel::Path { n: 12 }, 3).unwrap();
    let f = kruskal_mst(&g);
    let (out, _) = run(&g, &f, 0.5, 1);
    assert_eq!(as_set(&out.light), g.edge_set());
}

#[test]
fn triangle_excludes_the_heaviest_edge() {
    let g = WeightedGraph::from_raw(3, &[(0, 1, 1), (1, 2, 2), (0, 2, 3)]).unwrap();
    let f = Forest::new(WeightedGraph::from_raw(3, &[(0, 1, 1), (1, 2, 2)]).unwrap()).unwrap();
    let (out, _) = run(&g, &f, 0.5, 2);
    assert_eq!(as_set(&out.light), f.edge_set());
    assert_eq!(as_set(&out.light), brute_force_f_light(&g, &f));
}

#[test]
fn empty_forest_makes_every_edge_light() {
    let g = generate_graph(&GraphModel::ErdosRenyi { n: 16, m: 30 }, 4).unwrap();
    let (out, _) = run(&g, &Forest::empty(16), 0.3, 3);
    assert_eq!(as_set(&out.light), g.edge_set());
    assert_eq!(out.plan.len(), 1);
}

#[test]
fn matches_brute_force_on_random_graphs() {
    for s in 0..6 {
        let g = generate_graph(&GraphModel::ErdosRenyi { n: 48, m: 400 }, s).unwrap();
        let p = (48.0f64 / 400.0).sqrt();
        let f = sampled_forest(&g, p, s);
        let (out, _) = run(&g, &f, p, s);
        assert_eq!(out.misses, 0);
        assert_eq!(as_set(&out.light), brute_force_f_light(&g, &f), "seed {s}");
        let sizes = out.plan.l_set_sizes(g.edges());
        assert_eq!(out.found, sizes, "seed {s}");
    }
}

#[test]
fn p_at_least_one_skips_everything() {
    let g = generate_graph(&GraphModel::ErdosRenyi { n: 10, m: 12 }, 1).unwrap();
    let f = kruskal_mst(&g);
    let (out, net) = run(&g, &f, 1.0, 0);
    assert!(out.skipped);
    assert_eq!(net.transcript().messages_total, 0);
    assert_eq!(as_set(&out.light), f.edge_set());
}

#[test]
fn one_tuple_per_node_per_phase() {
    let g = generate_graph(&GraphModel::ErdosRenyi { n: 32, m: 120 }, 9).unwrap();
    let f = sampled_forest(&g, 0.5, 9);
    let (out, net) = run(&g, &f, 0.5, 9);
    let tuple_stage = net.transcript().stages.iter().find(|s| s.protocol == LABEL).unwrap();
    assert_eq!(tuple_stage.messages, 32 * out.plan.len() as u64);
    // In the tuple round every node hears from exactly one commander per phase.
    let trace = net.trace().unwrap();
    let mut by_round: std::collections::BTreeMap<u64, Vec<(NodeId, NodeId)>> = Default::default();
    for t in trace {
        by_round.entry(t.round).or_default().push((t.src, t.dst));
    }
    let phases = out.plan.len();
    let tuple_round = by_round
        .values()
        .find(|ms| ms.len() == 32 * phases && ms.iter().all(|&(s, _)| (s as usize) < phases))
        .expect("a round carrying exactly the tuples");
    let mut senders: Vec<HashSet<NodeId>> = vec![HashSet::new(); 32];
    for &(s, d) in tuple_round {
        senders[d as usize].insert(s);
    }
    assert!(senders.iter().all(|s| s.len() == phases));
}

#[test]
fn tuple_codec_round_trip() {
    let codec = KeyCodec::new(100);
    for t in [
        PhaseTuple { label: 3, bound: KeyBound::Infinite, rank: 0, parent: 3 },
        PhaseTuple { label: 0, bound: KeyBound::Finite(WeightKey::new(9_999, 4, 99)), rank: 57, parent: 12 },
    ] {
        let (w, b) = t.encode(&codec);
        assert!(b <= 8 * codec.word as usize);
        assert_eq!(PhaseTuple::decode(&w, b, &codec).unwrap(), t);
    }
}

#[test]
fn restricted_sketches_follow_the_bound() {
    let n = 16;
    let g = generate_graph(&GraphModel::Complete { n }, 2).unwrap();
    let params = SketchParams::with_reps(n, 1);
    let batch = PhaseSketches::derive(&seed_for(n, 5), n, params, &FlightConfig::default(), 0, 0, 6).unwrap();
    let tags: HashSet<u64> = batch.families.iter().map(|f| f.tag()).collect();
    assert_eq!(tags.len(), 6);
    let inc = g.incident(3);
    let below = WeightKey { w: 0, lo: 0, hi: 1 };
    assert!(batch.build(3, inc, KeyBound::Finite(below)).iter().all(Sketch::is_zero));
    let full = batch.build(3, inc, KeyBound::Infinite);
    for (s, fam) in full.iter().zip(&batch.families) {
        assert_eq!(*s, crate::sketch::build_sketch(3, inc, KeyBound::Infinite, fam));
    }
}

#[test]
fn surplus_commanders_stay_silent() {
    // One forest phase at n = 64 leaves commanders 1..5 idle.
    let g = generate_graph(&GraphModel::ErdosRenyi { n: 64, m: 200 }, 6).unwrap();
    let f = Forest::empty(64);
    let (out, net) = run(&g, &f, 0.4, 6);
    assert_eq!(out.plan.len(), 1);
    assert_eq!(out.commanders, 6);
    let tuple_stage = net.transcript().stages.iter().find(|s| s.protocol == LABEL).unwrap();
    assert_eq!(tuple_stage.messages, 64);
}
