//! F-light edges of `G` with respect to a spanning forest `F` of a sampled
//! subgraph, computed with few messages.
//!
//! Commanders gather `F`, simulate Borůvka on it locally and tell every node
//! its component label and MWOE weight per phase. For each phase, every node
//! sketches its incident edges up to that weight; the sketches are summed up
//! a gather tree per component, so the leader holds sketches of the cut
//! restricted to `L^i_j`. The leader decodes edges, peeling each decoded edge
//! off all of its sketches, until the residual is zero. A leader whose
//! sketches all fail on a nonzero residual asks for fresh sketches, up to a
//! cap. Decoded edges are announced to both endpoints.

mod plan;
mod stages;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use plan::{select_commanders, Phase, PhasePlan, PlanComponent};
use stages::{tuple_from_pieces, tuple_pieces, NotifyNode, SignalNode, TupleNode};
pub use stages::{Notice, PhaseTuple};

use crate::error::{param, Error, Result};
use crate::graph::{ceil_log2, Forest, KeyBound, NodeId, WeightKey, WeightedGraph};
use crate::kwise::{make_tag, SharedSeed};
use crate::mst::KeyCodec;
use crate::protocols::{check_bound, dsg_gather, gather_branching, tree_gather, GatherTree, TreeRole};
use crate::sim::{BitReader, BitWriter, Network, Payload};
use crate::sketch::{incidence_sign, PreparedIndex, SampleOutcome, Sketch, SketchFamily, SketchParams};

pub const LABEL: &str = "flight";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlightConfig {
    /// Multiplier in `beta = kappa * ceil(log2 n) * ceil(1/p)`.
    pub kappa: f64,
    /// Use `beta = ceil(log2(n)^5 / p)` instead.
    pub theory_beta: bool,
    /// Repetitions per sketch.
    pub sketch_reps: usize,
    /// Fresh sketch rounds a leader may request for one phase.
    pub max_topups: usize,
    /// Distinguishes calls that share a seed.
    pub tag: u64,
}

impl Default for FlightConfig {
    fn default() -> Self {
        Self { kappa: 2.0, theory_beta: false, sketch_reps: 1, max_topups: 4, tag: 0 }
    }
}

impl FlightConfig {
    pub fn beta(&self, n: usize, p: f64) -> usize {
        let lg = ceil_log2(n as u64).max(1) as f64;
        let b = if self.theory_beta { (lg.powi(5) / p).ceil() } else { (self.kappa * lg * (1.0 / p).ceil()).ceil() };
        (b as usize).max(1)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlightOutcome {
    /// `E(F)` together with every decoded edge, sorted.
    pub light: Vec<WeightKey>,
    pub plan: PhasePlan,
    pub commanders: usize,
    pub beta: usize,
    pub branching: usize,
    /// Whether the size formula (not a clamp) chose the branching.
    pub formula_branching: bool,
    /// Distinct edges decoded per phase and component.
    pub found: Vec<Vec<usize>>,
    pub sample_failures: u64,
    pub topups: u64,
    /// Components left with a nonzero residual after the last top-up.
    pub misses: u64,
    /// True when `p >= 1`: every edge of `G` is in `F` already.
    pub skipped: bool,
}

impl FlightOutcome {
    pub fn max_found(&self) -> usize {
        self.found.iter().flatten().copied().max().unwrap_or(0)
    }
}

struct PhaseSketches {
    families: Vec<SketchFamily>,
}

impl PhaseSketches {
    fn derive(
        seed: &SharedSeed,
        n: usize,
        params: SketchParams,
        cfg: &FlightConfig,
        phase: usize,
        round: usize,
        beta: usize,
    ) -> Result<Self> {
        let z_tag = make_tag(&[cfg.tag, 0x7a]);
        let families = (0..beta)
            .map(|b| {
                SketchFamily::derive(seed, n, params, make_tag(&[cfg.tag, phase as u64, round as u64, b as u64]), z_tag)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { families })
    }

    /// Sketches of `v`'s incidence vector restricted to keys admitted by `bound`.
    fn build(&self, v: NodeId, incident: &[WeightKey], bound: KeyBound) -> Vec<Sketch> {
        let f0 = &self.families[0];
        let prepared: Vec<(PreparedIndex, i64)> = incident
            .iter()
            .take_while(|e| bound.admits(e))
            .map(|e| (f0.prepare(e.index(f0.n())), incidence_sign(v, e)))
            .collect();
        self.families
            .iter()
            .map(|fam| {
                let mut s = fam.zero();
                for (p, sign) in &prepared {
                    s.add_prepared(fam, p, *sign);
                }
                s
            })
            .collect()
    }

    fn encode(&self, sketches: &[Sketch], n: usize) -> (Vec<u64>, usize) {
        let mut w = BitWriter::new();
        for s in sketches {
            s.write_cells(&mut w, n);
        }
        w.into_words()
    }

    fn decode(&self, words: &[u64], bits: usize) -> Result<Vec<Sketch>> {
        let mut r = BitReader::new(words, bits);
        self.families.iter().map(|f| Sketch::read_cells(f, &mut r)).collect()
    }
}

/// Leader-side decoding state for one component and phase.
struct Residual {
    sketches: Vec<(usize, Sketch)>,
    /// `(lo, hi) -> lo is inside`.
    found: BTreeMap<(NodeId, NodeId), bool>,
}

impl Residual {
    /// Samples every sketch repeatedly, peeling each new edge off all
    /// sketches, until a full pass finds nothing new. Failures of the final
    /// pass are counted. Returns whether the residual is zero.
    fn peel(&mut self, rounds: &[PhaseSketches], failures: &mut u64) -> Result<bool> {
        loop {
            let mut progress = false;
            let mut failed = 0;
            for b in 0..self.sketches.len() {
                loop {
                    let (round, ref s) = self.sketches[b];
                    let fams = &rounds[round].families;
                    match s.sample(&fams[b % fams.len()])? {
                        SampleOutcome::Edge { lo, hi, sign } => {
                            if self.found.insert((lo, hi), sign > 0).is_some() {
                                return Err(Error::Corruption(format!(
                                    "edge ({lo}, {hi}) decoded after it was peeled"
                                )));
                            }
                            self.subtract(rounds, lo, hi, sign as i64);
                            progress = true;
                        }
                        SampleOutcome::Failure => {
                            failed += 1;
                            break;
                        }
                        SampleOutcome::Empty => break,
                    }
                }
            }
            if !progress {
                *failures += failed;
                return Ok(self.sketches.iter().all(|(_, s)| s.is_zero()));
            }
        }
    }

    fn subtract(&mut self, rounds: &[PhaseSketches], lo: NodeId, hi: NodeId, sign: i64) {
        for (b, (round, s)) in self.sketches.iter_mut().enumerate() {
            let fams = &rounds[*round].families;
            s.add_edge(&fams[b % fams.len()], lo, hi, -sign);
        }
    }

    /// Adds a batch of fresh sketches, peeled of everything found so far.
    fn extend(&mut self, rounds: &[PhaseSketches], round: usize, fresh: Vec<Sketch>) {
        let fams = &rounds[round].families;
        let start = self.sketches.len();
        debug_assert_eq!(start % fams.len(), 0);
        for (b, mut s) in fresh.into_iter().enumerate() {
            for (&(lo, hi), &lo_inside) in &self.found {
                s.add_edge(&fams[b], lo, hi, if lo_inside { -1 } else { 1 });
            }
            self.sketches.push((round, s));
        }
    }
}

/// Runs the light-edge computation for `graph` and its forest `forest`,
/// sampled with probability `p`. Sketch randomness comes from `seed`.
pub fn compute_f_light(
    net: &mut Network,
    graph: &WeightedGraph,
    forest: &Forest,
    p: f64,
    seed: &SharedSeed,
    cfg: &FlightConfig,
) -> Result<FlightOutcome> {
    let n = net.n();
    if graph.n() != n || forest.n() != n {
        return param("graph, forest and network sizes differ");
    }
    if p.is_nan() || p <= 0.0 {
        return param(format!("sampling probability must be positive, got {p}"));
    }
    let codec = KeyCodec::new(n);
    codec.check(graph)?;
    let commanders = select_commanders(n);
    if p >= 1.0 {
        return Ok(FlightOutcome {
            light: forest.sorted_edges(),
            plan: PhasePlan { n, phases: Vec::new() },
            commanders: commanders.len(),
            beta: 0,
            branching: 0,
            formula_branching: false,
            found: Vec::new(),
            sample_failures: 0,
            topups: 0,
            misses: 0,
            skipped: true,
        });
    }

    // Every commander gathers E(F); each edge is reported by its lower endpoint.
    let items: Vec<Vec<Payload>> = (0..n as NodeId)
        .map(|v| {
            forest
                .incident(v)
                .iter()
                .filter(|e| e.lo == v)
                .map(|e| {
                    let mut w = BitWriter::new();
                    codec.push(&mut w, e);
                    w.finish()
                })
                .collect()
        })
        .collect();
    let gathered = dsg_gather(net, &items, &commanders)?;
    let c = commanders.len() as u64;
    check_bound(gathered.record.messages <= (2 * (n as u64 - 1) + 2) * c, || {
        format!("forest gather sent {} messages", gathered.record.messages)
    })?;
    let mut plans = Vec::with_capacity(commanders.len());
    for &cm in &commanders {
        let edges =
            gathered.received[cm as usize].iter().map(|p| codec.read(&mut p.reader())).collect::<Result<Vec<_>>>()?;
        plans.push(PhasePlan::simulate(n, &edges)?);
    }
    let plan = plans.swap_remove(0);
    if plans.iter().any(|p| *p != plan) {
        return Err(Error::ProtocolFailure("commanders computed different plans".into()));
    }
    if plan.len() > commanders.len() {
        return Err(Error::ProtocolFailure(format!("{} phases for {} commanders", plan.len(), commanders.len())));
    }

    // Tuples: commander i tells every node its phase-i component, bound and gather-tree position.
    let (s, formula_branching) = gather_branching(n, p);
    let mut tuple_progs: Vec<TupleNode> =
        (0..n).map(|_| TupleNode { outgoing: Vec::new(), pieces: BTreeMap::new() }).collect();
    for (i, ph) in plan.phases.iter().enumerate() {
        for comp in &ph.components {
            for (rank, &v) in comp.members.iter().enumerate() {
                let parent = GatherTree::role_for_rank(rank, s).map_or(v, |(_, pr, _)| comp.members[pr]);
                let t = PhaseTuple { label: comp.label, bound: comp.bound(), rank, parent };
                tuple_progs[commanders[i] as usize].outgoing.push((v, tuple_pieces(&t, &codec, net.bandwidth())));
            }
        }
    }
    let rec = net.run_stage(LABEL, &mut tuple_progs)?;
    let pieces_per_tuple =
        tuple_progs.iter().flat_map(|t| t.outgoing.first()).map(|o| o.1.len() as u64).max().unwrap_or(0);
    check_bound(rec.messages == (n * plan.len()) as u64 * pieces_per_tuple, || {
        format!("tuple distribution sent {} messages", rec.messages)
    })?;
    let mut tuples: Vec<Vec<PhaseTuple>> = Vec::with_capacity(n);
    for prog in &tuple_progs {
        if prog.pieces.len() != plan.len() {
            return Err(Error::ProtocolFailure(format!(
                "a node received {} of {} tuples",
                prog.pieces.len(),
                plan.len()
            )));
        }
        tuples.push(prog.pieces.values().map(|ps| tuple_from_pieces(ps, &codec)).collect::<Result<_>>()?);
    }
    drop(tuple_progs);

    let beta = cfg.beta(n, p);
    let params = SketchParams::with_reps(n, cfg.sketch_reps.max(1));
    let mut found = Vec::with_capacity(plan.len());
    let mut sample_failures = 0;
    let mut topups = 0;
    let mut misses = 0;
    let mut light: BTreeSet<WeightKey> = forest.edges().iter().copied().collect();

    for i in 0..plan.len() {
        let roles: Vec<Option<TreeRole>> = tuples
            .iter()
            .map(|ts| {
                let t = &ts[i];
                GatherTree::role_for_rank(t.rank, s).map(|(level, _, sibling)| TreeRole {
                    parent: t.parent,
                    level,
                    sibling,
                })
            })
            .collect();
        let leaders: Vec<NodeId> = (0..n as NodeId).filter(|&v| tuples[v as usize][i].rank == 0).collect();
        let mut rounds = vec![PhaseSketches::derive(seed, n, params, cfg, i, 0, beta)?];
        let mut residuals: BTreeMap<NodeId, Residual> = BTreeMap::new();
        let mut wanted: Vec<bool> = vec![true; n];
        for round in 0..=cfg.max_topups {
            if round > 0 {
                rounds.push(PhaseSketches::derive(seed, n, params, cfg, i, round, beta)?);
            }
            let batch = &rounds[round];
            let values: Vec<Option<Vec<Sketch>>> = (0..n as NodeId)
                .map(|v| wanted[v as usize].then(|| batch.build(v, graph.incident(v), tuples[v as usize][i].bound)))
                .collect();
            let roles_now: Vec<Option<TreeRole>> =
                roles.iter().enumerate().map(|(v, r)| if wanted[v] { *r } else { None }).collect();
            let out = tree_gather(
                net,
                &roles_now,
                values,
                |sk| batch.encode(sk, n),
                |w, b| batch.decode(w, b),
                |acc, other| acc.iter_mut().zip(other).try_for_each(|(a, o)| a.merge_from(&o)),
            )?;
            let mut values = out.values;
            let mut pending = Vec::new();
            for &l in &leaders {
                if !wanted[l as usize] {
                    continue;
                }
                let fresh = values[l as usize]
                    .take()
                    .ok_or_else(|| Error::ProtocolFailure(format!("leader {l} holds no sketches")))?;
                let res =
                    residuals.entry(l).or_insert_with(|| Residual { sketches: Vec::new(), found: BTreeMap::new() });
                res.extend(&rounds, round, fresh);
                if !res.peel(&rounds, &mut sample_failures)? {
                    pending.push(l);
                }
            }
            if pending.is_empty() {
                break;
            }
            if round == cfg.max_topups {
                misses += pending.len() as u64;
                break;
            }
            topups += pending.len() as u64;
            // Leader -> commander i -> members of the requesting components.
            let cm = commanders[i];
            let mut req: Vec<SignalNode> = (0..n).map(|_| SignalNode { to: Vec::new(), heard: Vec::new() }).collect();
            for &l in &pending {
                if l != cm {
                    req[l as usize].to.push(cm);
                }
            }
            net.run_stage(LABEL, &mut req)?;
            let mut notice: Vec<SignalNode> =
                (0..n).map(|_| SignalNode { to: Vec::new(), heard: Vec::new() }).collect();
            wanted = vec![false; n];
            let ph = &plan.phases[i];
            for &l in &pending {
                for &v in &ph.component(l).members {
                    wanted[v as usize] = true;
                    if v != cm {
                        notice[cm as usize].to.push(v);
                    }
                }
            }
            net.run_stage(LABEL, &mut notice)?;
        }

        // Announcements.
        let ph = &plan.phases[i];
        let mut progs: Vec<NotifyNode> = (0..n as NodeId)
            .map(|v| NotifyNode {
                id: v,
                codec,
                incident: graph.incident(v),
                tuples: &tuples[v as usize],
                queues: BTreeMap::new(),
                accepted: Vec::new(),
            })
            .collect();
        let mut found_i = vec![0; ph.components.len()];
        for (&l, res) in &residuals {
            found_i[ph.component_of[l as usize]] = res.found.len();
            for (&(lo, hi), &lo_inside) in &res.found {
                let notice = Notice { phase: i, lo, hi, lo_inside };
                for end in [lo, hi] {
                    if end == l {
                        progs[l as usize].accept(l, &notice)?;
                    } else {
                        progs[l as usize].queues.entry(end).or_default().push_back(notice);
                    }
                }
            }
        }
        net.run_stage(LABEL, &mut progs)?;
        let mut per_edge: BTreeMap<WeightKey, u32> = BTreeMap::new();
        for prog in &progs {
            for k in &prog.accepted {
                *per_edge.entry(*k).or_default() += 1;
            }
        }
        for (k, count) in per_edge {
            // Each decoded edge reached both endpoints once per component that found it.
            let owners: Vec<usize> = [k.lo, k.hi]
                .iter()
                .map(|&x| ph.component_of[x as usize])
                .filter(|&j| {
                    residuals.get(&ph.components[j].label).is_some_and(|r| r.found.contains_key(&(k.lo, k.hi)))
                })
                .collect();
            let expected = 2 * owners.len() as u32;
            if count != expected {
                return Err(Error::ProtocolFailure(format!(
                    "edge {k} acknowledged {count} times, expected {expected}"
                )));
            }
            if owners.iter().any(|&j| !ph.in_l_set(j, &k)) {
                return Err(Error::Corruption(format!("decoded edge {k} is outside L for phase {i}")));
            }
            light.insert(k);
        }
        found.push(found_i);
    }

    Ok(FlightOutcome {
        light: light.into_iter().collect(),
        plan,
        commanders: commanders.len(),
        beta,
        branching: s,
        formula_branching,
        found,
        sample_failures,
        topups,
        misses,
        skipped: false,
    })
}

#[cfg(test)]
mod tests;
