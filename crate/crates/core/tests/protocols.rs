use clique_mst::graph::NodeId;
use clique_mst::kwise::SharedSeed;
use clique_mst::protocols::{
    bound_checks, dgs_broadcast, distributed_sort, dsg_gather, rsg_route, tree_gather, GatherTree, RsgItem,
};
use clique_mst::sim::{check_link_rule, fragment, reassemble, Network, Payload, SimConfig};
use clique_mst::sketch::{Sketch, SketchFamily, SketchParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn traced(n: usize, seed: u64) -> Network {
    Network::new(SimConfig { trace: true, ..SimConfig::new(n, seed) }).unwrap()
}

#[test]
fn tree_gather_of_sixteen_sketches_matches_sequential_merge() {
    let (n, members, b) = (128, 100, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pi = SharedSeed::random(&mut rng, SharedSeed::default_bits(n));
    let params = SketchParams::with_reps(n, 2);
    let families: Vec<SketchFamily> =
        (0..b).map(|t| SketchFamily::derive(&pi, n, params, t as u64, 0).unwrap()).collect();
    let space = (n * n) as u64;
    let mut values: Vec<Option<Vec<Sketch>>> = vec![None; n];
    for slot in values.iter_mut().take(members) {
        *slot = Some(
            families
                .iter()
                .map(|f| {
                    let entries: Vec<(u64, i64)> =
                        (0..rng.gen_range(0..12)).map(|_| (rng.gen_range(0..space), rng.gen_range(-3..=3))).collect();
                    Sketch::from_entries(f, entries)
                })
                .collect(),
        );
    }
    let mut expected: Vec<Sketch> = families.iter().map(|f| f.zero()).collect();
    for v in values.iter().flatten() {
        for (acc, s) in expected.iter_mut().zip(v) {
            acc.merge_from(s).unwrap();
        }
    }

    let component: Vec<NodeId> = (0..members as NodeId).collect();
    let tree = GatherTree::build(&component, 4).unwrap();
    let roles: Vec<_> = (0..n as NodeId).map(|v| tree.role(v)).collect();
    let mut net = traced(n, 3);
    let out = tree_gather(
        &mut net,
        &roles,
        values,
        |v: &Vec<Sketch>| {
            let words: Vec<u64> = v
                .iter()
                .flat_map(|s| {
                    let w = s.to_words();
                    std::iter::once(w.len() as u64).chain(w)
                })
                .collect();
            let bits = 64 * words.len();
            (words, bits)
        },
        |words, _| {
            let mut out = Vec::new();
            let mut rest = words;
            while let Some((&len, tail)) = rest.split_first() {
                let (w, next) = tail.split_at(len as usize);
                out.push(Sketch::from_words(w)?);
                rest = next;
            }
            Ok(out)
        },
        |acc, other| {
            for (a, s) in acc.iter_mut().zip(&other) {
                a.merge_from(s)?;
            }
            Ok(())
        },
    )
    .unwrap();
    let root = out.values[tree.root() as usize].as_ref().unwrap();
    assert_eq!(root.len(), b);
    for (got, want) in root.iter().zip(&expected) {
        assert_eq!(got.to_words(), want.to_words());
    }
    check_link_rule(net.trace().unwrap()).unwrap();
}

#[test]
fn dsg_of_n_items_to_one_destination() {
    let n = 64;
    let mut items = vec![Vec::new(); n];
    for (v, list) in items.iter_mut().enumerate() {
        list.push(Payload::from_words(&[v as u64 * 7 + 1], 20));
    }
    let mut net = traced(n, 1);
    let out = dsg_gather(&mut net, &items, &[9]).unwrap();
    assert!(out.record.rounds <= 4);
    assert!(out.record.messages <= 2 * n as u64 + 2);
    let mut got: Vec<u64> = out.received[9].iter().map(|p| p.reader().read(20).unwrap()).collect();
    got.sort_unstable();
    assert_eq!(got, (0..n as u64).map(|v| v * 7 + 1).collect::<Vec<_>>());
    check_link_rule(net.trace().unwrap()).unwrap();
}

#[test]
fn rsg_from_one_source_to_distinct_destinations() {
    let n = 128;
    let k = 40;
    let items: Vec<RsgItem> = (0..k)
        .map(|j| RsgItem { src: 5, dst: (j * 3 % n) as NodeId, payload: Payload::from_words(&[j as u64], 16) })
        .collect();
    let mut net = traced(n, 8);
    let out = rsg_route(&mut net, &items, 0.5, 2.0).unwrap();
    assert_eq!(out.record.rounds, 2);
    assert_eq!(out.record.messages, 2 * k as u64);
    for j in 0..k {
        let dst = j * 3 % n;
        assert_eq!(out.delivered[dst].len(), 1);
        assert_eq!(out.delivered[dst][0].reader().read(16).unwrap(), j as u64);
    }
    check_link_rule(net.trace().unwrap()).unwrap();
}

#[test]
fn dgs_then_dsg_keep_every_bound() {
    let n = 32;
    let (checks, violations) = bound_checks();
    let mut net = traced(n, 4);
    let items: Vec<Payload> = (0..5).map(|i| Payload::from_words(&[i], 8)).collect();
    let out = dgs_broadcast(&mut net, 2, &items, &[0, 1, 31]).unwrap();
    assert_eq!((out.record.rounds, out.record.messages), (2, 20));
    let gathered = dsg_gather(&mut net, &vec![Vec::new(); n], &[3, 4]).unwrap();
    assert!(gathered.record.rounds <= 2 && gathered.record.messages <= 4);
    let (after, after_violations) = bound_checks();
    assert!(after >= checks + 2);
    assert_eq!(after_violations, violations);
}

#[test]
fn ten_kilobyte_fragment_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let words: Vec<u64> = (0..1280).map(|_| rng.gen()).collect();
    let bits = 64 * words.len() - 5;
    let mut pieces = fragment(&words, bits, 56, 7).unwrap();
    assert!(pieces.iter().all(|p| p.bits() <= 56));
    pieces.reverse();
    let (back, got_bits) = reassemble(&pieces, 7).unwrap();
    assert_eq!(got_bits, bits);
    let mask = (1u64 << 59) - 1;
    assert_eq!(back[..1279], words[..1279]);
    assert_eq!(back[1279] & mask, words[1279] & mask);
}

#[test]
fn sort_of_all_keys_at_one_node_is_local_order() {
    let n = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut keys = vec![Vec::new(); n];
    keys[17] = (0..n).map(|_| rng.gen_range(0..1000u64)).collect();
    let mut net = traced(n, 2);
    let out = distributed_sort(&mut net, &keys, 10, 0.5, 4.0).unwrap();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (keys[17][i], i));
    for (rank, &i) in order.iter().enumerate() {
        assert_eq!(out.ranks[17][i], rank as u64);
    }
    check_link_rule(net.trace().unwrap()).unwrap();
}
