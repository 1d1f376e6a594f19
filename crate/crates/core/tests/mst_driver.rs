use clique_mst::driver::{run_mst, DriverConfig, STEP_FINAL, STEP_FLIGHT, STEP_MEST, STEP_PI};
use clique_mst::graph::{ceil_log2, generate_graph, kruskal_mst, GraphModel, WeightedGraph};
use clique_mst::mst::{linear_messages_mst, LABEL};
use clique_mst::sim::{check_link_rule, Network, SimConfig};

fn er(n: usize, m: usize, seed: u64) -> WeightedGraph {
    generate_graph(&GraphModel::ErdosRenyi { n, m }, seed).unwrap()
}

#[test]
fn boruvka_matches_kruskal_on_a_hundred_graphs() {
    let (n, m) = (128, 1024);
    let lg = ceil_log2(n as u64) as u64;
    for seed in 0..100 {
        let g = er(n, m, seed);
        let mut net = Network::new(SimConfig::new(n, seed)).unwrap();
        let out = linear_messages_mst(&mut net, &g).unwrap();
        assert_eq!(out.forest.edge_set(), kruskal_mst(&g).edge_set(), "seed {seed}");
        assert!(out.phases <= lg as usize);
        assert!(out.messages <= 8 * (m as u64 + n as u64 * lg), "seed {seed}: {} messages", out.messages);

        // Stages come in (probe, merge, announce) triples, then a final probe
        // and merge that find nothing to join.
        let stages = &net.transcript().stages;
        assert_eq!(stages.len(), 3 * out.phases + 2);
        assert!(stages.iter().all(|s| s.protocol == LABEL));
        for phase in stages.chunks(3) {
            if let Some(merge) = phase.get(1) {
                assert!(merge.messages <= 3 * n as u64, "seed {seed}: merge sent {}", merge.messages);
            }
            if let Some(announce) = phase.get(2) {
                assert!(announce.messages <= n as u64);
            }
        }
        assert_eq!(out.phase_messages.iter().sum::<u64>(), out.messages);
    }
}

#[test]
fn boruvka_on_a_tree_costs_n_log_n() {
    let n = 128;
    let g = generate_graph(&GraphModel::Path { n }, 1).unwrap();
    let mut net = Network::new(SimConfig { trace: true, ..SimConfig::new(n, 1) }).unwrap();
    let out = linear_messages_mst(&mut net, &g).unwrap();
    assert_eq!(out.forest.edge_set(), g.edge_set());
    assert!(out.messages <= 8 * n as u64 * ceil_log2(n as u64) as u64);
    check_link_rule(net.trace().unwrap()).unwrap();
}

#[test]
fn v1_matches_kruskal_on_a_hundred_seeds() {
    let (n, m) = (128, 2048);
    let cfg = DriverConfig::v1();
    let mut flagged = 0;
    for seed in 0..100 {
        let g = er(n, m, seed);
        let mut net = Network::new(SimConfig::new(n, seed)).unwrap();
        let out = run_mst(&mut net, &g, &cfg).unwrap();
        if out.misses() > 0 {
            flagged += 1;
            continue;
        }
        assert_eq!(out.forest.edge_set(), kruskal_mst(&g).edge_set(), "seed {seed}");
        assert_eq!(out.m, m);
        let t = net.transcript();
        assert_eq!(t.by_step.values().sum::<u64>(), t.messages_total);
        for step in [STEP_PI, STEP_MEST, STEP_FLIGHT, STEP_FINAL] {
            assert!(t.by_step[step] > 0, "seed {seed}: step {step} sent nothing");
        }
    }
    assert!(flagged <= 1, "{flagged} flagged runs");
}

#[test]
fn v2_on_complete_graphs_recurses_boundedly() {
    let n = 128;
    let cfg = DriverConfig::v2(0.25);
    for seed in 0..5 {
        let g = generate_graph(&GraphModel::Complete { n }, seed).unwrap();
        let mut net = Network::new(SimConfig::new(n, seed)).unwrap();
        let out = run_mst(&mut net, &g, &cfg).unwrap();
        assert_eq!(out.forest.edge_set(), kruskal_mst(&g).edge_set(), "seed {seed}");
        assert!(out.depth <= 4, "depth {}", out.depth);
        assert_eq!(out.levels.len(), out.depth);
        let shrink = (n as f64).powf(-0.25);
        for level in &out.levels {
            assert!(
                level.eh as f64 <= 2.0 * level.m as f64 * shrink,
                "depth {}: {} of {}",
                level.depth,
                level.eh,
                level.m
            );
        }
    }
}

#[test]
fn identical_seeds_give_identical_transcripts() {
    let g = er(64, 512, 5);
    let cfg = DriverConfig::v1();
    let run = || {
        let mut net = Network::new(SimConfig::new(64, 5)).unwrap();
        let out = run_mst(&mut net, &g, &cfg).unwrap();
        (out.forest.edge_set(), net.transcript().clone())
    };
    assert_eq!(run(), run());
}
