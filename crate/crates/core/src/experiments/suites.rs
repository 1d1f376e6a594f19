//! Property checks at fixed seeds. The measuring functions are public so
//! that larger runs can reuse them with other sizes.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::runner::{quick_point, run_point};
use crate::driver::{sample_subgraph, Variant};
use crate::error::{param, Result};
use crate::flight::{compute_f_light, FlightConfig};
use crate::graph::{brute_force_f_light, edge_index, generate_graph, kruskal_mst, GraphModel, KeyBound, NodeId};
use crate::kwise::{derive_family, joint_distribution_is_uniform, SharedSeed};
use crate::protocols::{
    bound_checks, dgs_broadcast, distributed_sort, dsg_gather, rsg_destination_cap, rsg_route, RsgItem,
};
use crate::sim::{Network, Payload, SimConfig};
use crate::sketch::{build_sketch, incidence_sign, SampleOutcome, Sketch, SketchFamily, SketchParams};

pub const SUITES: [&str; 6] = ["hash", "sketch", "routing", "sort", "flight", "mst"];

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into() });
    }
}

fn shared_seed(n: usize, s: u64) -> SharedSeed {
    SharedSeed::random(&mut ChaCha8Rng::seed_from_u64(s), SharedSeed::default_bits(n))
}

fn family(n: usize, tag: u64, seed: &SharedSeed) -> Result<SketchFamily> {
    SketchFamily::derive(seed, n, SketchParams::for_n(n), tag, tag ^ 0x7a7a)
}

#[derive(Clone, Debug, Serialize)]
pub struct Uniformity {
    /// How often each support position was returned.
    pub counts: Vec<u64>,
    pub failures: u64,
    pub trials: u64,
    /// Positions whose frequency is within 3 binomial standard deviations of `1/support`.
    pub within_3_sigma: usize,
}

/// Samples `trials` independent sketches of one fixed vector with `support`
/// nonzero entries over the edge-index space of an `n`-node graph.
pub fn sampler_uniformity(n: usize, support: usize, trials: u64, seed: u64) -> Result<Uniformity> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(NodeId, NodeId)> =
        (0..n as NodeId).flat_map(|u| (u + 1..n as NodeId).map(move |v| (u, v))).collect();
    if support > pairs.len() {
        return param("support larger than the index space");
    }
    pairs.shuffle(&mut rng);
    let indices: Vec<u64> = pairs[..support].iter().map(|&(u, v)| edge_index(n, u, v)).collect();
    let position: BTreeMap<u64, usize> = indices.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let pi = shared_seed(n, seed);
    let mut counts = vec![0u64; support];
    let mut failures = 0;
    for t in 0..trials {
        let fam = family(n, t, &pi)?;
        let s = Sketch::from_entries(&fam, indices.iter().map(|&i| (i, 1)));
        match s.sample(&fam)? {
            SampleOutcome::Edge { lo, hi, .. } => match position.get(&edge_index(n, lo, hi)) {
                Some(&i) => counts[i] += 1,
                None => return Err(crate::Error::Corruption(format!("sampled ({lo}, {hi}) outside the support"))),
            },
            SampleOutcome::Failure => failures += 1,
            SampleOutcome::Empty => return Err(crate::Error::Corruption("nonzero vector sketched as empty".into())),
        }
    }
    let hits: u64 = counts.iter().sum();
    let q = 1.0 / support as f64;
    let sigma = (hits as f64 * q * (1.0 - q)).sqrt();
    let within_3_sigma = counts.iter().filter(|&&c| (c as f64 - hits as f64 * q).abs() <= 3.0 * sigma).count();
    Ok(Uniformity { counts, failures, trials, within_3_sigma })
}

/// Random signed vector pairs: counts pairs whose merged sketch differs
/// from the sketch of the sum.
pub fn linearity_violations(pairs: u64, seed: u64) -> Result<u64> {
    let n = 40;
    let space = (n * n) as u64;
    let pi = shared_seed(n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for t in 0..pairs {
        let fam = family(n, t, &pi)?;
        let mut vector = || -> Vec<(u64, i64)> {
            let len = rng.gen_range(0..40);
            (0..len).map(|_| (rng.gen_range(0..space), rng.gen_range(-4..=4))).collect()
        };
        let (x, y) = (vector(), vector());
        let sum = Sketch::from_entries(&fam, x.iter().chain(&y).copied());
        let merged = Sketch::merge(&Sketch::from_entries(&fam, x), &Sketch::from_entries(&fam, y))?;
        bad += (merged != sum) as u64;
    }
    Ok(bad)
}

/// Random graphs and node sets: counts trials where the merged sketch of a
/// node set differs from the sketch of its signed cut, or samples a non-cut edge.
pub fn cancellation_violations(trials: u64, seed: u64) -> Result<u64> {
    let n = 32;
    let pi = shared_seed(n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0);
    let mut bad = 0;
    for t in 0..trials {
        let g = generate_graph(&GraphModel::ErdosRenyi { n, m: rng.gen_range(0..=200) }, seed ^ t)?;
        let inside: HashSet<NodeId> = (0..n as NodeId).filter(|_| rng.gen_bool(0.5)).collect();
        let fam = family(n, t, &pi)?;
        let mut acc = fam.zero();
        for &v in &inside {
            acc.merge_from(&build_sketch(v, g.incident(v), KeyBound::Infinite, &fam))?;
        }
        let cut: Vec<(u64, i64)> = g
            .edges()
            .iter()
            .filter(|e| inside.contains(&e.lo) != inside.contains(&e.hi))
            .map(|e| {
                (e.index(n), if inside.contains(&e.lo) { incidence_sign(e.lo, e) } else { incidence_sign(e.hi, e) })
            })
            .collect();
        let ok_sketch = acc == Sketch::from_entries(&fam, cut.iter().copied());
        let ok_sample = match acc.sample(&fam)? {
            SampleOutcome::Edge { lo, hi, .. } => cut.iter().any(|&(i, _)| i == edge_index(n, lo, hi)),
            SampleOutcome::Empty => cut.is_empty(),
            SampleOutcome::Failure => true,
        };
        bad += (!ok_sketch || !ok_sample) as u64;
    }
    Ok(bad)
}

/// Every destination receives exactly `cap` items, every source sends `cap`:
/// item layer `j` is a random permutation. Returns the rounds of each trial.
pub fn rsg_rounds_at_cap(n: usize, eps: f64, c: f64, trials: u64, seed: u64) -> Result<Vec<u64>> {
    let cap = rsg_destination_cap(n, eps, c);
    let mut rounds = Vec::with_capacity(trials as usize);
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ t.wrapping_mul(0x9e37_79b9));
        let mut items = Vec::with_capacity(n * cap);
        for j in 0..cap {
            let mut perm: Vec<NodeId> = (0..n as NodeId).collect();
            perm.shuffle(&mut rng);
            for (src, &dst) in perm.iter().enumerate() {
                items.push(RsgItem { src: src as NodeId, dst, payload: Payload::from_words(&[j as u64], 8) });
            }
        }
        let mut net = Network::new(SimConfig::new(n, seed.wrapping_add(t)))?;
        rounds.push(rsg_route(&mut net, &items, eps, c)?.record.rounds);
    }
    Ok(rounds)
}

/// `|E(H)|` of the k-wise sample with `p = sqrt(n/m)` for each seed.
pub fn sampled_sizes(n: usize, m: usize, seeds: std::ops::Range<u64>) -> Result<Vec<usize>> {
    let p = (n as f64 / m as f64).sqrt();
    seeds
        .map(|s| {
            let g = generate_graph(&GraphModel::ErdosRenyi { n, m }, s)?;
            Ok(sample_subgraph(&g, &shared_seed(n, s ^ 0x5eed), p, 0)?.m())
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct FlightTrial {
    pub seed: u64,
    pub matches: bool,
    /// Output edges that are not light.
    pub false_positives: usize,
    /// Light edges missing from the output.
    pub missed: usize,
    pub misses: u64,
    pub sample_failures: u64,
    pub el: usize,
    pub max_lij: usize,
    pub messages: u64,
}

/// `F` is the MST of a k-wise sample with `p = sqrt(n/m)`; the light edges of
/// `G` are computed on the simulator and compared with the brute-force set.
pub fn flight_trials(n: usize, m: usize, seeds: std::ops::Range<u64>, cfg: &FlightConfig) -> Result<Vec<FlightTrial>> {
    let p = (n as f64 / m as f64).sqrt();
    seeds
        .map(|s| {
            let g = generate_graph(&GraphModel::ErdosRenyi { n, m }, s)?;
            let pi = shared_seed(n, s ^ 0xf1);
            let f = kruskal_mst(&sample_subgraph(&g, &pi, p, 0)?);
            let mut net = Network::new(SimConfig::new(n, s))?;
            let out = compute_f_light(&mut net, &g, &f, p, &pi, cfg)?;
            let truth = brute_force_f_light(&g, &f);
            let got: HashSet<_> = out.light.iter().copied().collect();
            Ok(FlightTrial {
                seed: s,
                matches: got == truth,
                false_positives: got.difference(&truth).count(),
                missed: truth.difference(&got).count(),
                misses: out.misses,
                sample_failures: out.sample_failures,
                el: out.light.len(),
                max_lij: out.max_found(),
                messages: net.transcript().messages_total,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SortTrial {
    pub seed: u64,
    pub correct: bool,
    pub messages: u64,
    pub rounds: u64,
}

/// `k` random `key_bits`-bit keys spread over `n` nodes.
pub fn sort_trials(n: usize, k: usize, key_bits: u32, seeds: std::ops::Range<u64>) -> Result<Vec<SortTrial>> {
    seeds
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let mut keys = vec![Vec::new(); n];
            for _ in 0..k {
                keys[rng.gen_range(0..n)].push(rng.gen_range(0..1u64 << key_bits));
            }
            let mut net = Network::new(SimConfig::new(n, s))?;
            let out = distributed_sort(&mut net, &keys, key_bits, 0.5, 4.0)?;
            // Reference: rank of (key, holder, position) in sorted order.
            let mut all: Vec<(u64, usize, usize)> = keys
                .iter()
                .enumerate()
                .flat_map(|(v, ks)| ks.iter().enumerate().map(move |(i, &x)| (x, v, i)))
                .collect();
            all.sort_unstable();
            let correct = all.iter().enumerate().all(|(r, &(_, v, i))| out.ranks[v][i] == r as u64);
            Ok(SortTrial { seed: s, correct, messages: out.messages, rounds: out.rounds })
        })
        .collect()
}

fn hash_suite(r: &mut SuiteReport) -> Result<()> {
    for (k, q) in [(2, 5), (2, 7), (3, 5)] {
        r.check(
            &format!("exhaustive k={k} q={q}"),
            joint_distribution_is_uniform(k, q)?,
            "all joint distributions uniform",
        );
    }
    let pi = shared_seed(64, 1);
    let a = derive_family(&pi, 8, 4099, 3)?;
    r.check("derivation is deterministic", a == derive_family(&pi, 8, 4099, 3)?, "same seed and tag");
    let hits = (0..4099).filter(|&x| a.bernoulli_sample(x, 0.25)).count();
    r.check("bernoulli rate", (hits as f64 / 4099.0 - 0.25).abs() < 0.05, format!("{hits} of 4099 below 1/4"));
    Ok(())
}

fn sketch_suite(r: &mut SuiteReport) -> Result<()> {
    let lin = linearity_violations(500, 11)?;
    r.check("linearity", lin == 0, format!("{lin} of 500 pairs differ"));
    let canc = cancellation_violations(100, 12)?;
    r.check("cancellation", canc == 0, format!("{canc} of 100 node sets leak"));
    let u = sampler_uniformity(64, 50, 2000, 13)?;
    r.check(
        "uniformity",
        u.within_3_sigma >= 47 && u.failures * 100 <= u.trials,
        format!("{} of 50 within 3 sigma, {} failures", u.within_3_sigma, u.failures),
    );
    Ok(())
}

fn routing_suite(r: &mut SuiteReport) -> Result<()> {
    let mut dgs_ok = true;
    for n in [8usize, 16, 32] {
        for k in [1, 3, n] {
            for rs in [1, 5.min(n), n] {
                let mut net = Network::new(SimConfig::new(n, 1))?;
                let items: Vec<Payload> = (0..k).map(|i| Payload::from_words(&[i as u64], 4)).collect();
                let recv: Vec<NodeId> = (0..rs as NodeId).collect();
                let out = dgs_broadcast(&mut net, 0, &items, &recv)?;
                dgs_ok &= out.record.rounds == 2 && out.record.messages == (k + k * rs) as u64;
            }
        }
    }
    r.check("dgs exact", dgs_ok, "2 rounds and k + k|R| messages on the grid");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in [16usize, 64] {
        let items: Vec<Vec<Payload>> =
            (0..n).map(|_| (0..rng.gen_range(0..4)).map(|i| Payload::from_words(&[i], 6)).collect()).collect();
        let out = dsg_gather(&mut Network::new(SimConfig::new(n, 2))?, &items, &[0, 3])?;
        let k: usize = items.iter().map(Vec::len).sum();
        r.check(
            &format!("dsg n={n}"),
            out.received[3].len() == k,
            format!("{} rounds, {} messages", out.record.rounds, out.record.messages),
        );
    }
    let rounds = rsg_rounds_at_cap(64, 0.5, 1.0, 50, 7)?;
    let budget = crate::protocols::rsg_budget(0.5, 1.0);
    let over = rounds.iter().filter(|&&x| x > budget).count();
    r.check("rsg rounds", over <= 1, format!("{over} of 50 trials above {budget} rounds"));
    Ok(())
}

fn sort_suite(r: &mut SuiteReport) -> Result<()> {
    let trials = sort_trials(64, 512, 20, 0..5)?;
    let max_msgs = trials.iter().map(|t| t.messages).max().unwrap_or(0);
    r.check("ranks", trials.iter().all(|t| t.correct), "5 seeds, n = 64, k = 512");
    r.check("messages", max_msgs <= 12 * 512, format!("at most {max_msgs} messages"));
    Ok(())
}

fn flight_suite(r: &mut SuiteReport) -> Result<()> {
    let trials = flight_trials(64, 512, 0..10, &FlightConfig::default())?;
    let ok = trials.iter().filter(|t| t.matches).count();
    let fp: usize = trials.iter().map(|t| t.false_positives).sum();
    r.check("oracle", ok >= 9, format!("{ok} of 10 seeds equal the brute-force set"));
    r.check("soundness", fp == 0, format!("{fp} false positives"));
    Ok(())
}

fn mst_suite(r: &mut SuiteReport) -> Result<()> {
    for (variant, eps) in [(Variant::V1, 0.5), (Variant::V2, 0.25)] {
        let point = quick_point(variant, 32, "n^2/3", eps)?;
        let mut ok = 0;
        let mut flagged = 0;
        for s in 0..100 {
            let rec = run_point(&point, s)?;
            ok += rec.oracle_match as u32;
            flagged += (rec.failures > 0) as u32;
        }
        r.check(&format!("{variant} oracle"), ok == 100, format!("{ok} of 100 seeds, {flagged} flagged"));
    }
    Ok(())
}

/// Runs a named suite. Every bound check performed by the routing
/// primitives during the suite must also pass.
pub fn verify_suite(name: &str) -> Result<SuiteReport> {
    let mut r = SuiteReport { suite: name.to_string(), checks: Vec::new() };
    let before = bound_checks();
    match name {
        "hash" => hash_suite(&mut r)?,
        "sketch" => sketch_suite(&mut r)?,
        "routing" => routing_suite(&mut r)?,
        "sort" => sort_suite(&mut r)?,
        "flight" => flight_suite(&mut r)?,
        "mst" => mst_suite(&mut r)?,
        other => return param(format!("unknown suite {other:?}; known: {}", SUITES.join(", "))),
    }
    let after = bound_checks();
    let (checks, violations) = (after.0 - before.0, after.1 - before.1);
    r.check("protocol bounds", violations == 0, format!("{violations} violations in {checks} checks"));
    Ok(r)
}
