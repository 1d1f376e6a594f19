//! Randomized two-hop routing. Round 1: every source hands each of its items
//! to a distinct uniformly random intermediate (possibly itself). Later
//! rounds: each intermediate forwards at most one item per destination per
//! round.

use std::collections::BTreeMap;

use rand::seq::index::sample;

use super::check_bound;
use crate::error::{param, Error, Result};
use crate::graph::NodeId;
use crate::sim::{BitWriter, Ctx, Network, NodeProgram, Payload, StageRecord, Status};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RsgItem {
    pub src: NodeId,
    pub dst: NodeId,
    pub payload: Payload,
}

pub struct RsgOutcome {
    /// Payloads delivered to each node, in arrival order.
    pub delivered: Vec<Vec<Payload>>,
    pub record: StageRecord,
    /// False when delivery needed more than [`rsg_budget`] rounds.
    pub within_budget: bool,
}

/// `floor(c * n^(1 - eps))` items per destination.
pub fn rsg_destination_cap(n: usize, eps: f64, c: f64) -> usize {
    (c * (n as f64).powf(1.0 - eps) + 1e-9).floor() as usize
}

/// `ceil(3c / eps)` rounds.
pub fn rsg_budget(eps: f64, c: f64) -> u64 {
    (3.0 * c / eps - 1e-9).ceil() as u64
}

struct RsgNode<'a> {
    outgoing: Vec<&'a RsgItem>,
    word: u32,
    queues: BTreeMap<NodeId, Vec<Payload>>,
    got: Vec<Payload>,
}

impl NodeProgram for RsgNode<'_> {
    fn step(&mut self, ctx: &mut Ctx<'_, '_>) -> Result<Status> {
        if ctx.round() == 1 {
            if !self.outgoing.is_empty() {
                let mut rng = ctx.rng();
                let mids = sample(&mut rng, ctx.n(), self.outgoing.len());
                for (item, mid) in self.outgoing.iter().zip(mids) {
                    let mut w = BitWriter::new();
                    w.push(item.dst as u64, self.word);
                    let mut r = item.payload.reader();
                    while r.remaining() > 0 {
                        let t = r.remaining().min(64) as u32;
                        w.push(r.read(t)?, t);
                    }
                    ctx.send(mid as NodeId, w.finish())?;
                }
            }
        } else if ctx.round() == 2 {
            for m in ctx.inbox() {
                let mut r = m.payload.reader();
                let dst = r.read(self.word)? as NodeId;
                let mut w = BitWriter::new();
                while r.remaining() > 0 {
                    let t = r.remaining().min(64) as u32;
                    w.push(r.read(t)?, t);
                }
                self.queues.entry(dst).or_default().push(w.finish());
            }
            for q in self.queues.values_mut() {
                q.reverse();
            }
        } else {
            self.got.extend(ctx.inbox().iter().map(|m| m.payload.clone()));
        }
        if ctx.round() >= 2 {
            for (&dst, q) in self.queues.iter_mut() {
                if let Some(p) = q.pop() {
                    ctx.send(dst, p)?;
                }
            }
            self.queues.retain(|_, q| !q.is_empty());
        }
        Ok(if ctx.round() == 1 || !self.queues.is_empty() { Status::Active } else { Status::Done })
    }
}

/// Routes `items` under the per-source cap `n` and per-destination cap
/// [`rsg_destination_cap`]. Uses exactly `2k` messages.
pub fn rsg_route(net: &mut Network, items: &[RsgItem], eps: f64, c: f64) -> Result<RsgOutcome> {
    let n = net.n();
    if !(eps > 0.0 && eps <= 1.0 && c > 0.0) {
        return param(format!("need 0 < eps <= 1 and c > 0, got eps = {eps}, c = {c}"));
    }
    let word = net.word_bits();
    let cap = rsg_destination_cap(n, eps, c);
    let mut per_src = vec![0usize; n];
    let mut per_dst = vec![0usize; n];
    for it in items {
        if it.src as usize >= n || it.dst as usize >= n {
            return param(format!("item endpoint out of range: {} -> {}", it.src, it.dst));
        }
        if it.payload.bits() + word as usize > net.bandwidth() {
            return param(format!("rsg payload of {} bits leaves no room for the destination", it.payload.bits()));
        }
        per_src[it.src as usize] += 1;
        per_dst[it.dst as usize] += 1;
    }
    if let Some(v) = per_src.iter().position(|&c| c > n) {
        return param(format!("node {v} sources {} items, more than n = {n}", per_src[v]));
    }
    if let Some(v) = per_dst.iter().position(|&x| x > cap) {
        return param(format!("node {v} receives {} items, cap is {cap}", per_dst[v]));
    }
    let mut progs: Vec<RsgNode> =
        (0..n).map(|_| RsgNode { outgoing: Vec::new(), word, queues: BTreeMap::new(), got: Vec::new() }).collect();
    for it in items {
        progs[it.src as usize].outgoing.push(it);
    }
    let record = net.run_stage("rsg", &mut progs)?;
    let k = items.len() as u64;
    check_bound(record.messages == 2 * k, || format!("rsg sent {} messages for {k} items", record.messages))?;
    let delivered: Vec<Vec<Payload>> = progs.into_iter().map(|p| p.got).collect();
    if delivered.iter().map(Vec::len).sum::<usize>() as u64 != k {
        return Err(Error::ProtocolFailure("rsg lost items".into()));
    }
    let within_budget = k == 0 || record.rounds <= rsg_budget(eps, c);
    Ok(RsgOutcome { delivered, record, within_budget })
}

/// Splits `items` first-fit into batches that each satisfy both caps and
/// routes them one after another. Returns the batch outcomes in order.
pub fn rsg_route_batched(net: &mut Network, items: Vec<RsgItem>, eps: f64, c: f64) -> Result<Vec<RsgOutcome>> {
    let n = net.n();
    let cap = rsg_destination_cap(n, eps, c);
    if cap == 0 {
        return param(format!("destination cap is zero for n = {n}, eps = {eps}, c = {c}"));
    }
    let mut batches: Vec<Vec<RsgItem>> = Vec::new();
    let mut src_load: Vec<Vec<usize>> = Vec::new();
    let mut dst_load: Vec<Vec<usize>> = Vec::new();
    // First batch that may still have room for a given source or destination.
    let mut src_open = vec![0usize; n];
    let mut dst_open = vec![0usize; n];
    for it in items {
        let (s, d) = (it.src as usize, it.dst as usize);
        if s >= n || d >= n {
            return param(format!("item endpoint out of range: {s} -> {d}"));
        }
        let mut b = src_open[s].max(dst_open[d]);
        loop {
            if b == batches.len() {
                batches.push(Vec::new());
                src_load.push(vec![0; n]);
                dst_load.push(vec![0; n]);
            }
            if src_load[b][s] < n && dst_load[b][d] < cap {
                break;
            }
            b += 1;
        }
        src_load[b][s] += 1;
        dst_load[b][d] += 1;
        while src_open[s] < batches.len() && src_load[src_open[s]][s] >= n {
            src_open[s] += 1;
        }
        while dst_open[d] < batches.len() && dst_load[dst_open[d]][d] >= cap {
            dst_open[d] += 1;
        }
        batches[b].push(it);
    }
    batches.iter().map(|batch| rsg_route(net, batch, eps, c)).collect()
}
