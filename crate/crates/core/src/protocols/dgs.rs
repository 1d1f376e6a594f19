//! Deterministic broadcast of `k <= n` items from one holder: item `i` goes to
//! supporter node `i`, which forwards it to every receiver.

use super::check_bound;
use crate::error::{param, Result};
use crate::graph::NodeId;
use crate::sim::{Ctx, Network, NodeProgram, Payload, StageRecord, Status};

pub struct DgsOutcome {
    /// Items in holder order at each receiver; empty elsewhere.
    pub received: Vec<Vec<Payload>>,
    pub record: StageRecord,
}

struct DgsNode<'a> {
    holder: bool,
    items: &'a [Payload],
    receivers: &'a [NodeId],
    got: Vec<Option<Payload>>,
}

impl NodeProgram for DgsNode<'_> {
    fn step(&mut self, ctx: &mut Ctx<'_, '_>) -> Result<Status> {
        match ctx.round() {
            1 if self.holder => {
                for (i, item) in self.items.iter().enumerate() {
                    ctx.send(i as NodeId, item.clone())?;
                }
            }
            2 => {
                if let Some(m) = ctx.inbox().first() {
                    let item = m.payload.clone();
                    for &r in self.receivers {
                        ctx.send(r, item.clone())?;
                    }
                }
            }
            _ => {
                for m in ctx.inbox() {
                    self.got[m.src as usize] = Some(m.payload.clone());
                }
            }
        }
        Ok(Status::Done)
    }
}

pub fn dgs_broadcast(net: &mut Network, holder: NodeId, items: &[Payload], receivers: &[NodeId]) -> Result<DgsOutcome> {
    let n = net.n();
    let k = items.len();
    if k > n {
        return param(format!("broadcast of {k} items exceeds n = {n}"));
    }
    let mut rs = receivers.to_vec();
    rs.sort_unstable();
    rs.dedup();
    if rs.len() != receivers.len() || rs.last().is_some_and(|&r| r as usize >= n) {
        return param("receivers must be distinct node ids");
    }
    let mut progs: Vec<DgsNode> =
        (0..n).map(|v| DgsNode { holder: v == holder as usize, items, receivers: &rs, got: vec![None; k] }).collect();
    let record = net.run_stage("dgs", &mut progs)?;
    let expected = (k + k * rs.len()) as u64;
    check_bound(record.messages == expected, || format!("dgs sent {} messages, expected {expected}", record.messages))?;
    check_bound(k == 0 || record.rounds == 2, || format!("dgs took {} rounds", record.rounds))?;
    let mut received = vec![Vec::new(); n];
    for &r in &rs {
        let got: Option<Vec<Payload>> = progs[r as usize].got.iter().cloned().collect();
        received[r as usize] =
            got.ok_or_else(|| crate::Error::ProtocolFailure("dgs receiver missed an item".into()))?;
    }
    Ok(DgsOutcome { received, record })
}
