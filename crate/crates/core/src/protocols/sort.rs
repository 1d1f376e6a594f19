//! Distributed ranking of `k` keys held across the clique.
//!
//! Keys are relabelled `0..k` through offsets computed at node 0 and moved to
//! `W = floor(sqrt k)` workers (label `i` goes to worker `i mod W`). The
//! workers run a sample sort: a few evenly spaced local samples are gathered
//! at worker 0, which broadcasts `W - 1` splitters; keys move to their bucket
//! owner, owners learn their global offsets from worker 0, and the ranks are
//! routed back to the holders.
//!
//! Ties are broken by `(key, holder, local index)`, so ranks always form a
//! permutation of `0..k`.

use super::{check_bound, dgs_broadcast, dsg_gather, dsg_item_capacity, rsg_route_batched, RsgItem};
use crate::error::{param, Error, Result};
use crate::graph::{ceil_log2, NodeId};
use crate::sim::{BitWriter, Ctx, Network, NodeProgram, Payload, Status};

pub struct SortOutcome {
    /// `ranks[v][j]` is the global rank of the `j`-th key held by `v`.
    pub ranks: Vec<Vec<u64>>,
    pub workers: usize,
    pub rounds: u64,
    pub messages: u64,
    /// Number of routing batches used across all routing steps.
    pub batches: usize,
}

type Tuple = (u64, u64, u64);

struct Codec {
    key_bits: u32,
    word: u32,
    wide: u32,
}

impl Codec {
    fn tuple(&self, t: Tuple) -> Payload {
        let mut w = BitWriter::new();
        w.push(t.0, self.key_bits).push(t.1, self.word).push(t.2, self.word);
        w.finish()
    }

    fn read_tuple(&self, p: &Payload) -> Result<Tuple> {
        let mut r = p.reader();
        Ok((r.read(self.key_bits)?, r.read(self.word)?, r.read(self.word)?))
    }

    fn wide(&self, x: u64) -> Payload {
        let mut w = BitWriter::new();
        w.push(x, self.wide);
        w.finish()
    }
}

/// One round of precomputed point-to-point messages.
struct DirectNode {
    out: Vec<(NodeId, Payload)>,
    got: Vec<(NodeId, Payload)>,
}

impl NodeProgram for DirectNode {
    fn step(&mut self, ctx: &mut Ctx<'_, '_>) -> Result<Status> {
        for (d, p) in std::mem::take(&mut self.out) {
            ctx.send(d, p)?;
        }
        self.got.extend(ctx.inbox().iter().map(|m| (m.src, m.payload.clone())));
        Ok(Status::Done)
    }
}

fn direct(net: &mut Network, out: Vec<Vec<(NodeId, Payload)>>) -> Result<Vec<Vec<(NodeId, Payload)>>> {
    let mut progs: Vec<DirectNode> = out.into_iter().map(|out| DirectNode { out, got: Vec::new() }).collect();
    net.run_stage("dsort", &mut progs)?;
    Ok(progs.into_iter().map(|p| p.got).collect())
}

/// Ranks `keys[v]` (each below `2^key_bits`) across all nodes. Requires at
/// most `n` keys per node and `k <= c n^(2 - eps)`.
pub fn distributed_sort(net: &mut Network, keys: &[Vec<u64>], key_bits: u32, eps: f64, c: f64) -> Result<SortOutcome> {
    let n = net.n();
    if keys.len() != n {
        return param(format!("sort needs one key list per node, got {}", keys.len()));
    }
    let word = net.word_bits();
    let wide = 2 * word + 1;
    let room = dsg_item_capacity(net);
    if key_bits == 0 || key_bits > 64 || key_bits as usize + 2 * word as usize > room {
        return param(format!("keys of {key_bits} bits do not fit beside two ids in {room} bits"));
    }
    if let Some(v) = keys.iter().position(|l| l.len() > n) {
        return param(format!("node {v} holds {} keys, more than n = {n}", keys[v].len()));
    }
    if key_bits < 64 && keys.iter().flatten().any(|&x| x >> key_bits != 0) {
        return param(format!("a key exceeds {key_bits} bits"));
    }
    let k: usize = keys.iter().map(Vec::len).sum();
    let k_cap = c * (n as f64).powf(2.0 - eps);
    if k as f64 > k_cap {
        return param(format!("{k} keys exceed the cap {k_cap:.0}"));
    }
    let codec = Codec { key_bits, word, wide };
    let before = net.transcript().clone();
    let mut batches = 0;
    let ranks = net.scoped("dsort", |net| {
        if k == 0 {
            return Ok(vec![Vec::new(); n]);
        }
        let workers = (k as f64).sqrt().floor() as usize;

        // Counts to node 0, then each holder learns its label offset and k.
        let counts: Vec<Vec<Payload>> =
            keys.iter()
                .map(|l| {
                    if l.is_empty() {
                        vec![]
                    } else {
                        vec![Payload::from_words(&[l.len() as u64], word as usize + 1)]
                    }
                })
                .collect();
        let gathered = dsg_gather(net, &counts, &[0])?;
        let holders: Vec<usize> = (0..n).filter(|&v| !keys[v].is_empty()).collect();
        if gathered.received[0].len() != holders.len() {
            return Err(Error::ProtocolFailure("count gather lost a holder".into()));
        }
        let mut replies = vec![Vec::new(); n];
        let mut offset = 0u64;
        for &v in &holders {
            let mut w = BitWriter::new();
            w.push(offset, wide).push(k as u64, wide);
            replies[0].push((v as NodeId, w.finish()));
            offset += keys[v].len() as u64;
        }
        let got = direct(net, replies)?;

        // Labelled keys to their workers.
        let mut items = Vec::with_capacity(k);
        for &v in &holders {
            let mut r = got[v][0].1.reader();
            let idx_w = r.read(wide)?;
            for (j, &key) in keys[v].iter().enumerate() {
                let label = idx_w + j as u64;
                items.push(RsgItem {
                    src: v as NodeId,
                    dst: (label % workers as u64) as NodeId,
                    payload: codec.tuple((key, v as u64, j as u64)),
                });
            }
        }
        let outs = rsg_route_batched(net, items, eps, c)?;
        batches += outs.len();
        let mut local: Vec<Vec<Tuple>> = vec![Vec::new(); workers];
        for out in outs {
            for (w, got) in out.delivered.into_iter().enumerate().take(workers) {
                for p in got {
                    local[w].push(codec.read_tuple(&p)?);
                }
            }
        }
        for l in &mut local {
            l.sort_unstable();
        }

        // Regular samples to worker 0, splitters back to every worker.
        let rate = ceil_log2(n as u64).max(1) as usize;
        let samples: Vec<Vec<Payload>> = (0..n)
            .map(|v| {
                let l = if v < workers { &local[v][..] } else { &[][..] };
                let take = rate.min(l.len());
                (0..take).map(|i| codec.tuple(l[(i * l.len()) / take])).collect()
            })
            .collect();
        let pool = dsg_gather(net, &samples, &[0])?;
        let mut pool: Vec<Tuple> = pool.received[0].iter().map(|p| codec.read_tuple(p)).collect::<Result<_>>()?;
        pool.sort_unstable();
        let splitters: Vec<Payload> = (1..workers).map(|i| codec.tuple(pool[(i * pool.len()) / workers])).collect();
        let receivers: Vec<NodeId> = (1..workers as NodeId).collect();
        let bcast = dgs_broadcast(net, 0, &splitters, &receivers)?;
        let split_at: Vec<Vec<Tuple>> = (0..workers)
            .map(|w| {
                let src = if w == 0 { &splitters } else { &bcast.received[w] };
                src.iter().map(|p| codec.read_tuple(p)).collect::<Result<_>>()
            })
            .collect::<Result<_>>()?;

        // Keys to bucket owners.
        let mut items = Vec::with_capacity(k);
        for (w, l) in local.iter().enumerate() {
            for &t in l {
                let bucket = split_at[w].partition_point(|s| *s < t);
                items.push(RsgItem { src: w as NodeId, dst: bucket as NodeId, payload: codec.tuple(t) });
            }
        }
        let outs = rsg_route_batched(net, items, eps, c)?;
        batches += outs.len();
        let mut bucket: Vec<Vec<Tuple>> = vec![Vec::new(); workers];
        for out in outs {
            for (w, got) in out.delivered.into_iter().enumerate().take(workers) {
                for p in got {
                    bucket[w].push(codec.read_tuple(&p)?);
                }
            }
        }
        for b in &mut bucket {
            b.sort_unstable();
        }

        // Prefix counts through worker 0.
        let mut out = vec![Vec::new(); n];
        for (w, b) in bucket.iter().enumerate() {
            if !b.is_empty() {
                out[w].push((0, codec.wide(b.len() as u64)));
            }
        }
        let got = direct(net, out)?;
        let mut sizes = got[0].clone();
        sizes.sort_by_key(|x| x.0);
        let mut out = vec![Vec::new(); n];
        let mut offset = 0u64;
        for (w, p) in sizes {
            out[0].push((w, codec.wide(offset)));
            offset += p.reader().read(wide)?;
        }
        let got = direct(net, out)?;

        // Ranks back to holders.
        let mut items = Vec::with_capacity(k);
        for (w, b) in bucket.iter().enumerate() {
            if b.is_empty() {
                continue;
            }
            let base = got[w][0].1.reader().read(wide)?;
            for (i, &(_, holder, idx)) in b.iter().enumerate() {
                let mut p = BitWriter::new();
                p.push(idx, word).push(base + i as u64, wide);
                items.push(RsgItem { src: w as NodeId, dst: holder as NodeId, payload: p.finish() });
            }
        }
        let outs = rsg_route_batched(net, items, eps, c)?;
        batches += outs.len();
        let mut ranks: Vec<Vec<Option<u64>>> = keys.iter().map(|l| vec![None; l.len()]).collect();
        for out in outs {
            for (v, got) in out.delivered.into_iter().enumerate() {
                for p in got {
                    let mut r = p.reader();
                    let (idx, rank) = (r.read(word)? as usize, r.read(wide)?);
                    let slot = ranks[v]
                        .get_mut(idx)
                        .ok_or_else(|| Error::Corruption(format!("rank for unknown key {idx} at {v}")))?;
                    *slot = Some(rank);
                }
            }
        }
        ranks
            .into_iter()
            .map(|l| l.into_iter().collect::<Option<Vec<_>>>())
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::ProtocolFailure("a key received no rank".into()))
    })?;
    let after = net.transcript();
    let (rounds, messages) = (after.rounds - before.rounds, after.messages_total - before.messages_total);
    check_bound(messages <= 12 * k as u64, || format!("sort of {k} keys sent {messages} messages"))?;
    Ok(SortOutcome { ranks, workers: (k as f64).sqrt().floor() as usize, rounds, messages, batches })
}
