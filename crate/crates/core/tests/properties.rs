use std::collections::{BTreeSet, HashSet};

use clique_mst::driver::{run_mst, sample_subgraph, DriverConfig};
use clique_mst::flight::{compute_f_light, FlightConfig, PhasePlan};
use clique_mst::graph::{
    brute_force_f_light, ceil_log2, generate_graph, kruskal_mst, pad_weights, prim_msf, Forest, GraphModel, KeyBound,
    NodeId, WeightedGraph,
};
use clique_mst::kwise::{derive_family, SharedSeed};
use clique_mst::mst::linear_messages_mst;
use clique_mst::protocols::{distributed_sort, dsg_gather, tree_gather, GatherTree};
use clique_mst::sim::{check_link_rule, Network, Payload, SimConfig};
use clique_mst::sketch::{build_sketch, SampleOutcome, Sketch, SketchFamily, SketchParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn graph_strategy(max_n: usize) -> impl Strategy<Value = WeightedGraph> {
    (4..=max_n, 0.0..1.0f64, any::<u64>()).prop_map(|(n, density, seed)| {
        let m = (density * (n * (n - 1) / 2) as f64) as usize;
        generate_graph(&GraphModel::ErdosRenyi { n, m }, seed).unwrap()
    })
}

/// Raw weights from a tiny range, so ties are common.
fn tied_graph_strategy() -> impl Strategy<Value = WeightedGraph> {
    (3..20usize, any::<u64>()).prop_flat_map(|(n, _)| {
        let pairs: Vec<(NodeId, NodeId)> =
            (0..n as NodeId).flat_map(|u| (u + 1..n as NodeId).map(move |v| (u, v))).collect();
        proptest::sample::subsequence(pairs.clone(), 0..=pairs.len())
            .prop_flat_map(move |chosen| {
                let len = chosen.len();
                (Just(chosen), proptest::collection::vec(0..4u64, len))
            })
            .prop_map(move |(chosen, ws)| {
                let raw: Vec<_> = chosen.iter().zip(ws).map(|(&(u, v), w)| (u, v, w)).collect();
                pad_weights(n, &raw).unwrap()
            })
    })
}

fn seed_for(n: usize, s: u64) -> SharedSeed {
    SharedSeed::random(&mut ChaCha8Rng::seed_from_u64(s), SharedSeed::default_bits(n))
}

fn traced(n: usize, seed: u64) -> Network {
    Network::new(SimConfig { trace: true, ..SimConfig::new(n, seed) }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn padding_is_injective_and_order_preserving(g in tied_graph_strategy()) {
        let keys = g.edges();
        prop_assert_eq!(keys.iter().collect::<HashSet<_>>().len(), keys.len());
        for a in keys {
            for b in keys {
                if a.w < b.w {
                    prop_assert!(a < b);
                }
            }
        }
    }

    #[test]
    fn kruskal_equals_prim_and_forest_edges_are_light(g in tied_graph_strategy()) {
        let k = kruskal_mst(&g);
        prop_assert_eq!(k.edge_set(), prim_msf(&g).edge_set());
        let light = brute_force_f_light(&g, &k);
        prop_assert!(k.edges().iter().all(|e| light.contains(e)));
    }

    #[test]
    fn derived_families_are_pure(s in any::<u64>(), tag in any::<u64>(), k in 1..12usize) {
        let seed = seed_for(64, s);
        let a = derive_family(&seed, k, 4099, tag).unwrap();
        let b = derive_family(&seed, k, 4099, tag).unwrap();
        prop_assert_eq!(a.coeffs(), b.coeffs());
    }

    #[test]
    fn sketches_are_linear(
        x in proptest::collection::vec((0..1600u64, -5..=5i64), 0..30),
        y in proptest::collection::vec((0..1600u64, -5..=5i64), 0..30),
        s in any::<u64>(),
    ) {
        let fam = SketchFamily::derive(&seed_for(40, s), 40, SketchParams::for_n(40), s, 1).unwrap();
        let merged = Sketch::merge(&Sketch::from_entries(&fam, x.clone()), &Sketch::from_entries(&fam, y.clone())).unwrap();
        let sum = Sketch::from_entries(&fam, x.into_iter().chain(y));
        prop_assert_eq!(merged.to_words(), sum.to_words());
    }

    #[test]
    fn component_samples_are_cut_edges(g in graph_strategy(32), mask in any::<u32>(), s in any::<u64>()) {
        let n = g.n();
        let fam = SketchFamily::derive(&seed_for(n, s), n, SketchParams::for_n(n), s, 2).unwrap();
        let inside: Vec<NodeId> = (0..n as NodeId).filter(|v| mask >> v & 1 == 1).collect();
        let mut acc = fam.zero();
        for &v in &inside {
            acc.merge_from(&build_sketch(v, g.incident(v), KeyBound::Infinite, &fam)).unwrap();
        }
        let cut: HashSet<(NodeId, NodeId)> = g
            .edges()
            .iter()
            .filter(|e| inside.contains(&e.lo) != inside.contains(&e.hi))
            .map(|e| (e.lo, e.hi))
            .collect();
        match acc.sample(&fam).unwrap() {
            SampleOutcome::Edge { lo, hi, .. } => prop_assert!(cut.contains(&(lo, hi))),
            SampleOutcome::Empty => prop_assert!(cut.is_empty()),
            SampleOutcome::Failure => prop_assert!(!cut.is_empty()),
        }
    }

    #[test]
    fn dsg_delivers_everything_within_bounds(
        n in 4..40usize,
        counts in proptest::collection::vec(0..3usize, 40),
        dest_mask in any::<u64>(),
        seed in any::<u64>(),
    ) {
        let items: Vec<Vec<Payload>> = (0..n)
            .map(|v| (0..counts[v]).map(|j| Payload::from_words(&[(v * 3 + j) as u64], 8)).collect())
            .collect();
        let mut dests: Vec<NodeId> = (0..n as NodeId).filter(|d| dest_mask >> d & 1 == 1).collect();
        if dests.is_empty() {
            dests.push(0);
        }
        let k: usize = counts[..n].iter().sum();
        let mut net = traced(n, seed);
        let out = dsg_gather(&mut net, &items, &dests).unwrap();
        prop_assert!(out.record.rounds <= 2 * k.div_ceil(n) as u64 + 2);
        prop_assert!(out.record.messages <= (2 * k as u64 + 2) * dests.len() as u64);
        let mut want: Vec<u64> = items.iter().flatten().map(|p| p.reader().read(8).unwrap()).collect();
        want.sort_unstable();
        for &d in &dests {
            let mut got: Vec<u64> = out.received[d as usize].iter().map(|p| p.reader().read(8).unwrap()).collect();
            got.sort_unstable();
            prop_assert_eq!(&got, &want);
        }
        check_link_rule(net.trace().unwrap()).unwrap();
        let t = net.transcript();
        prop_assert_eq!(t.by_protocol.values().sum::<u64>(), t.messages_total);
    }

    #[test]
    fn tree_gather_sums_for_any_shape_and_length(
        mask in any::<u64>(),
        s in 2..6usize,
        len in 1..40usize,
        seed in any::<u64>(),
    ) {
        let n = 64;
        let mut component: Vec<NodeId> = (0..n as NodeId).filter(|v| mask >> v & 1 == 1).collect();
        if component.is_empty() {
            component.push(7);
        }
        let tree = GatherTree::build(&component, s).unwrap();
        let roles: Vec<_> = (0..n as NodeId).map(|v| tree.role(v)).collect();
        let values: Vec<Option<Vec<u64>>> = (0..n as u64)
            .map(|v| component.contains(&(v as NodeId)).then(|| (0..len as u64).map(|i| v * 1000 + i).collect()))
            .collect();
        let want: Vec<u64> = (0..len as u64).map(|i| component.iter().map(|&v| v as u64 * 1000 + i).sum()).collect();
        let mut net = traced(n, seed);
        let out = tree_gather(
            &mut net,
            &roles,
            values,
            |v| (v.clone(), 64 * v.len()),
            |w, _| Ok(w.to_vec()),
            |a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(())
            },
        )
        .unwrap();
        prop_assert_eq!(out.values[tree.root() as usize].as_ref(), Some(&want));
        check_link_rule(net.trace().unwrap()).unwrap();
    }

    #[test]
    fn sort_ranks_are_a_permutation_matching_sequential_order(
        n in 8..48usize,
        raw in proptest::collection::vec((0..48usize, 0..256u64), 0..200),
        seed in any::<u64>(),
    ) {
        let mut keys = vec![Vec::new(); n];
        for (v, key) in raw {
            if keys[v % n].len() < n {
                keys[v % n].push(key);
            }
        }
        let mut net = Network::new(SimConfig::new(n, seed)).unwrap();
        let out = distributed_sort(&mut net, &keys, 8, 0.5, 4.0).unwrap();
        let mut all: Vec<(u64, usize, usize)> =
            keys.iter().enumerate().flat_map(|(v, ks)| ks.iter().enumerate().map(move |(i, &x)| (x, v, i))).collect();
        all.sort_unstable();
        for (r, &(_, v, i)) in all.iter().enumerate() {
            prop_assert_eq!(out.ranks[v][i], r as u64);
        }
        let ranks: BTreeSet<u64> = out.ranks.iter().flatten().copied().collect();
        prop_assert_eq!(ranks.len(), all.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn boruvka_equals_kruskal(g in graph_strategy(48), seed in any::<u64>()) {
        let n = g.n();
        let mut net = traced(n, seed);
        let out = linear_messages_mst(&mut net, &g).unwrap();
        prop_assert_eq!(out.forest.edge_set(), kruskal_mst(&g).edge_set());
        prop_assert!(out.phases <= ceil_log2(n as u64) as usize);
        check_link_rule(net.trace().unwrap()).unwrap();
    }

    #[test]
    fn light_edge_output_is_sound_and_plans_partition(
        g in graph_strategy(40),
        keep in any::<u64>(),
        seed in any::<u64>(),
    ) {
        let n = g.n();
        let mst = kruskal_mst(&g);
        let f = Forest::new(WeightedGraph::from_keys(
            n,
            mst.edges().iter().enumerate().filter(|(i, _)| keep >> (i % 64) & 1 == 1).map(|(_, e)| *e),
        ))
        .unwrap();
        let mut net = Network::new(SimConfig::new(n, seed)).unwrap();
        let out = compute_f_light(&mut net, &g, &f, 0.5, &seed_for(n, seed), &FlightConfig::default()).unwrap();
        let truth = brute_force_f_light(&g, &f);
        prop_assert!(out.light.iter().all(|e| truth.contains(e)), "false positive");
        if out.misses == 0 {
            prop_assert_eq!(out.light.iter().copied().collect::<HashSet<_>>(), truth);
        }
        let plan = PhasePlan::simulate(n, f.edges()).unwrap();
        for phase in &plan.phases {
            let mut seen = vec![false; n];
            for (j, c) in phase.components.iter().enumerate() {
                prop_assert_eq!(c.label, *c.members.iter().min().unwrap());
                for &v in &c.members {
                    prop_assert!(!seen[v as usize]);
                    seen[v as usize] = true;
                    prop_assert_eq!(phase.component_of[v as usize], j);
                }
            }
            prop_assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn drivers_are_correct_unless_flagged(g in graph_strategy(40), seed in any::<u64>(), v2 in any::<bool>()) {
        let n = g.n();
        let cfg = if v2 { DriverConfig::v2(0.5) } else { DriverConfig::v1() };
        let mut net = Network::new(SimConfig::new(n, seed)).unwrap();
        let out = run_mst(&mut net, &g, &cfg).unwrap();
        if out.misses() == 0 {
            prop_assert_eq!(out.forest.edge_set(), kruskal_mst(&g).edge_set());
        }
        let t = net.transcript();
        prop_assert_eq!(t.by_step.values().sum::<u64>(), t.messages_total);
        prop_assert_eq!(t.by_protocol.values().sum::<u64>(), t.messages_total);
    }

    #[test]
    fn sampling_is_local_and_deterministic(g in graph_strategy(40), s in any::<u64>(), p in 0.0..1.0f64) {
        let seed = seed_for(g.n(), s);
        let h = sample_subgraph(&g, &seed, p, 3).unwrap();
        prop_assert!(h.edges().iter().all(|e| g.contains(e)));
        prop_assert_eq!(h, sample_subgraph(&g, &seed, p, 3).unwrap());
    }
}
