//! Deterministic gather of `k` items to every node of `V*`.
//!
//! Round 1: each source sends its first item together with its item count to
//! every destination. Round 2: the coordinator (first destination) replies to
//! each source holding more than one item with the offset of its remaining
//! items in a global labelling. Round 3: a source sends its `j`-th remaining
//! item to relay `(offset + j) mod n`. From round 4: each relay forwards one
//! held item per round to every destination.

use std::collections::VecDeque;

use super::check_bound;
use crate::error::{param, Error, Result};
use crate::graph::NodeId;
use crate::sim::{BitWriter, Ctx, Network, NodeProgram, Payload, StageRecord, Status};

pub struct DsgOutcome {
    /// All `k` items at each destination (first-round items by source id,
    /// then relayed items); empty elsewhere.
    pub received: Vec<Vec<Payload>>,
    pub record: StageRecord,
}

/// Largest item that fits beside the count field of the first message.
pub fn dsg_item_capacity(net: &Network) -> usize {
    net.bandwidth().saturating_sub(net.word_bits() as usize + 1)
}

struct DsgNode<'a> {
    id: NodeId,
    items: &'a [Payload],
    dests: &'a [NodeId],
    coordinator: bool,
    count_bits: u32,
    offset_bits: u32,
    relay_queue: VecDeque<Payload>,
    got: Vec<Payload>,
}

impl DsgNode<'_> {
    fn is_dest(&self) -> bool {
        self.dests.binary_search(&self.id).is_ok()
    }
}

impl NodeProgram for DsgNode<'_> {
    fn step(&mut self, ctx: &mut Ctx<'_, '_>) -> Result<Status> {
        let n = ctx.n() as u64;
        let round = ctx.round();
        match round {
            1 => {
                if let Some(first) = self.items.first() {
                    let mut w = BitWriter::new();
                    w.push(self.items.len() as u64, self.count_bits);
                    push_payload(&mut w, first);
                    let msg = w.finish();
                    for &d in self.dests {
                        ctx.send(d, msg.clone())?;
                    }
                }
            }
            2 => {
                let mut firsts: Vec<(NodeId, u64, Payload)> = Vec::new();
                for m in ctx.inbox() {
                    let mut r = m.payload.reader();
                    let count = r.read(self.count_bits)?;
                    let rest = r.remaining();
                    let mut w = BitWriter::new();
                    let mut left = rest;
                    while left > 0 {
                        let t = left.min(64) as u32;
                        w.push(r.read(t)?, t);
                        left -= t as usize;
                    }
                    firsts.push((m.src, count, w.finish()));
                }
                firsts.sort_by_key(|f| f.0);
                if self.coordinator {
                    let mut offset = 0u64;
                    for (src, count, _) in &firsts {
                        if *count > 1 {
                            let mut w = BitWriter::new();
                            w.push(offset, self.offset_bits);
                            ctx.send(*src, w.finish())?;
                            offset += count - 1;
                        }
                    }
                }
                if self.is_dest() {
                    self.got.extend(firsts.into_iter().map(|f| f.2));
                }
            }
            3 => {
                if let Some(m) = ctx.inbox().first() {
                    let offset = m.payload.reader().read(self.offset_bits)?;
                    for (j, item) in self.items.iter().skip(1).enumerate() {
                        ctx.send(((offset + j as u64) % n) as NodeId, item.clone())?;
                    }
                }
            }
            _ => {
                if round > 3 {
                    // Relayed copies arriving at destinations.
                    if round > 4 && self.is_dest() {
                        self.got.extend(ctx.inbox().iter().map(|m| m.payload.clone()));
                    }
                    if round == 4 {
                        self.relay_queue.extend(ctx.inbox().iter().map(|m| m.payload.clone()));
                    }
                }
                if let Some(item) = self.relay_queue.pop_front() {
                    for &d in self.dests {
                        ctx.send(d, item.clone())?;
                    }
                    return Ok(Status::Active);
                }
            }
        }
        Ok(if self.relay_queue.is_empty() { Status::Done } else { Status::Active })
    }
}

fn push_payload(w: &mut BitWriter, p: &Payload) {
    let mut r = p.reader();
    while r.remaining() > 0 {
        let t = r.remaining().min(64) as u32;
        w.push(r.read(t).expect("within payload"), t);
    }
}

pub fn dsg_gather(net: &mut Network, items: &[Vec<Payload>], dests: &[NodeId]) -> Result<DsgOutcome> {
    let n = net.n();
    if items.len() != n {
        return param(format!("dsg needs one item list per node, got {}", items.len()));
    }
    let mut ds = dests.to_vec();
    ds.sort_unstable();
    ds.dedup();
    if ds.is_empty() || ds.len() != dests.len() || ds.last().is_some_and(|&d| d as usize >= n) {
        return param("destinations must be a nonempty set of node ids");
    }
    let cap = dsg_item_capacity(net);
    if let Some(big) = items.iter().flatten().find(|p| p.bits() > cap) {
        return param(format!("dsg item of {} bits exceeds capacity {cap}", big.bits()));
    }
    if let Some(v) = items.iter().position(|l| l.len() > n) {
        return param(format!("node {v} sources {} items, more than n = {n}", items[v].len()));
    }
    let k: usize = items.iter().map(Vec::len).sum();
    let word = net.word_bits();
    let mut progs: Vec<DsgNode> = (0..n)
        .map(|v| DsgNode {
            id: v as NodeId,
            items: &items[v],
            dests: &ds,
            coordinator: v as NodeId == ds[0],
            count_bits: word + 1,
            offset_bits: 2 * word + 1,
            relay_queue: VecDeque::new(),
            got: Vec::new(),
        })
        .collect();
    let record = net.run_stage("dsg", &mut progs)?;
    let round_bound = 2 * k.div_ceil(n) as u64 + 2;
    let msg_bound = (2 * k as u64 + 2) * ds.len() as u64;
    check_bound(record.rounds <= round_bound, || format!("dsg took {} rounds > {round_bound}", record.rounds))?;
    check_bound(record.messages <= msg_bound, || format!("dsg sent {} messages > {msg_bound}", record.messages))?;
    let mut received = vec![Vec::new(); n];
    for &d in &ds {
        let got = std::mem::take(&mut progs[d as usize].got);
        if got.len() != k {
            return Err(Error::ProtocolFailure(format!("dsg destination {d} holds {} of {k} items", got.len())));
        }
        received[d as usize] = got;
    }
    Ok(DsgOutcome { received, record })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SimConfig;

    fn word(x: u64) -> Payload {
        Payload::from_words(&[x], 20)
    }

    fn sorted(v: &[Payload]) -> Vec<u64> {
        let mut x: Vec<u64> = v.iter().map(|p| p.words()[0]).collect();
        x.sort_unstable();
        x
    }

    #[test]
    fn nothing_to_gather() {
        let mut net = Network::new(SimConfig::new(6, 0)).unwrap();
        let out = dsg_gather(&mut net, &vec![vec![]; 6], &[2, 3]).unwrap();
        assert_eq!(out.record.messages, 0);
        assert!(out.record.rounds <= 2);
    }

    #[test]
    fn n_items_to_one_destination() {
        let n = 16;
        let mut net = Network::new(SimConfig::new(n, 0)).unwrap();
        // Uneven sources: node 0 holds 8 items, nodes 1..=8 hold one each.
        let mut items = vec![vec![]; n];
        items[0] = (0..8).map(word).collect();
        for (v, slot) in items.iter_mut().enumerate().skip(1).take(8) {
            *slot = vec![word(100 + v as u64)];
        }
        let out = dsg_gather(&mut net, &items, &[5]).unwrap();
        assert!(out.record.rounds <= 4);
        assert!(out.record.messages <= 2 * 16 + 2);
        let want: Vec<u64> = (0..8).chain(101..=108).collect();
        assert_eq!(sorted(&out.received[5]), want);
    }

    #[test]
    fn many_items_many_destinations() {
        let n = 10;
        let mut net = Network::new(SimConfig::new(n, 0)).unwrap();
        let items: Vec<Vec<Payload>> =
            (0..n).map(|v| (0..v as u64).map(|j| word(v as u64 * 100 + j)).collect()).collect();
        let k: usize = items.iter().map(Vec::len).sum();
        let dests = [0, 4, 9];
        let out = dsg_gather(&mut net, &items, &dests).unwrap();
        let want: Vec<u64> = sorted(&items.concat());
        for d in dests {
            assert_eq!(sorted(&out.received[d as usize]), want);
        }
        assert!(out.record.rounds <= 2 * k.div_ceil(n) as u64 + 2);
    }

    #[test]
    fn oversized_items_rejected() {
        let mut net = Network::new(SimConfig::new(4, 0)).unwrap();
        let big = Payload::from_words(&[0], 16);
        assert!(dsg_gather(&mut net, &[vec![big], vec![], vec![], vec![]], &[0]).is_err());
    }
}
