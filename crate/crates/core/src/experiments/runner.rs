use std::collections::HashSet;
use std::time::{Duration, Instant};

use super::config::{ExperimentConfig, ExperimentPoint};
use super::record::ExperimentRecord;
use crate::driver::{run_mst, Variant};
use crate::error::{Error, Result};
use crate::graph::{brute_force_f_light, generate_graph, kruskal_mst, WeightedGraph};
use crate::kwise::make_tag;
use crate::sim::{Network, SimConfig};

/// Runs one point on one seed. The graph depends on the seed only; a flagged
/// attempt is rerun with fresh simulator randomness, up to `retries` times.
/// Errors are returned only for invalid configurations.
pub fn run_point(point: &ExperimentPoint, seed: u64) -> Result<ExperimentRecord> {
    let graph = generate_graph(&point.graph_model()?, seed)?;
    let cfg = point.driver();
    cfg.validate()?;
    let oracle = kruskal_mst(&graph).edge_set();
    let start = Instant::now();
    let deadline = start + Duration::from_millis(point.timeout_ms);
    let mut rec = ExperimentRecord {
        point: point.clone(),
        variant: point.variant,
        n: graph.n(),
        m: graph.m(),
        eps: (point.variant == Variant::V2).then_some(point.epsilon),
        p: None,
        seed,
        rounds: 0,
        msgs_total: 0,
        msgs_by_step: Default::default(),
        msgs_by_protocol: Default::default(),
        eh: None,
        el: None,
        max_lij: None,
        depth: 0,
        oracle_match: false,
        flight_match: None,
        failures: 0,
        attempts: 0,
        sample_failures: 0,
        timeout: false,
        error: None,
        wall_ms: 0,
    };
    for attempt in 0..=point.retries as u64 {
        rec.attempts += 1;
        let sim_seed = if attempt == 0 { seed } else { make_tag(&[seed, attempt]) };
        let mut net = Network::new(SimConfig { beta: point.beta, ..SimConfig::new(graph.n(), sim_seed) })?;
        net.set_deadline(Some(deadline));
        let result = run_mst(&mut net, &graph, &cfg);
        let t = net.transcript();
        rec.rounds = t.rounds;
        rec.msgs_total = t.messages_total;
        rec.msgs_by_step = t.by_step.clone();
        rec.msgs_by_protocol = t.by_protocol.clone();
        match result {
            Ok(out) => {
                let top = out.levels.first();
                rec.p = top.map(|l| l.p);
                rec.eh = top.map(|l| l.eh);
                rec.el = top.map(|l| l.el);
                rec.max_lij = out.levels.iter().map(|l| l.max_lij).max();
                rec.depth = out.depth;
                rec.sample_failures += out.levels.iter().map(|l| l.sample_failures).sum::<u64>();
                rec.oracle_match = out.forest.edge_set() == oracle;
                if point.check_flight {
                    rec.flight_match = out.top.as_ref().map(|t| {
                        t.light.iter().copied().collect::<HashSet<_>>() == brute_force_f_light(&graph, &t.sample_forest)
                    });
                }
                if out.misses() == 0 {
                    break;
                }
                rec.failures += 1;
                rec.error = Some(format!("{} light-edge misses", out.misses()));
            }
            Err(Error::Timeout(msg)) => {
                rec.timeout = true;
                rec.error = Some(msg);
                rec.oracle_match = false;
                break;
            }
            Err(e @ (Error::Param(_) | Error::Parse { .. })) => return Err(e),
            Err(e) => {
                rec.failures += 1;
                rec.oracle_match = false;
                rec.error = Some(e.to_string());
            }
        }
    }
    if point.wall_clock {
        rec.wall_ms = start.elapsed().as_millis() as u64;
    }
    Ok(rec)
}

/// Runs every point on every seed, in order, handing each record to `sink`.
pub fn run_experiment(
    config: &ExperimentConfig,
    mut sink: impl FnMut(&ExperimentRecord),
) -> Result<Vec<ExperimentRecord>> {
    let mut out = Vec::new();
    for point in &config.points {
        for seed in config.seeds.clone() {
            let rec = run_point(point, seed)?;
            sink(&rec);
            out.push(rec);
        }
    }
    Ok(out)
}

/// Convenience for tests and suites: `variant` on an `n`-node graph.
pub fn quick_point(variant: Variant, n: usize, density: &str, epsilon: f64) -> Result<ExperimentPoint> {
    let text = format!("variant = {variant}\nn = {n}\nm = {density}\nepsilon = {epsilon}\nwall_clock = false\n");
    Ok(ExperimentConfig::parse(&text)?.points.remove(0))
}

/// The graph a point generates for `seed`.
pub fn point_graph(point: &ExperimentPoint, seed: u64) -> Result<WeightedGraph> {
    generate_graph(&point.graph_model()?, seed)
}
