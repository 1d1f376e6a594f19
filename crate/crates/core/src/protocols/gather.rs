//! Rooted-tree aggregation of equal-length bit streams within components.
//!
//! Members are ranked by id; level `i` holds the ranks divisible by `s^i`, so
//! `|S_{i+1}| = ceil(|S_i| / s)` and the root is the smallest id. A member of
//! rank `x > 0` sends once, at level `l = v_s(x)`, to the member of rank
//! `x - x mod s^(l+1)`.
//!
//! A bulk transfer at one level uses a fixed relay schedule: the `f`-th piece
//! of sibling `k` has slot `j = k F + f`, travels in round `2 floor(j / n) + 1`
//! to relay `(parent + 1 + j) mod n`, and is forwarded to the parent in the next
//! round. Each piece therefore costs exactly two messages, and the parent
//! recovers `(k, f)` from the arrival round and the relay id.
//!
//! Pieces whose bits are all zero are not sent; the parent fills silent slots
//! with zeros. A child whose whole stream is zero therefore costs nothing.

use crate::error::{param, Error, Result};
use crate::graph::NodeId;
use crate::sim::{join_stream, split_stream, BitWriter, Ctx, Network, NodeProgram, Payload, StageRecord, Status};

/// Branching factor `max(2, min(n^(2/3) p / log^9 n, ceil(sqrt n)))`, and
/// whether the first formula (rather than a clamp) was active.
pub fn gather_branching(n: usize, p: f64) -> (usize, bool) {
    let lg = (n as f64).log2().max(1.0);
    let formula = (n as f64).powf(2.0 / 3.0) * p / lg.powi(9);
    let cap = (n as f64).sqrt().ceil();
    let s = formula.min(cap).floor().max(2.0) as usize;
    (s, formula >= 2.0 && formula <= cap)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeRole {
    pub parent: NodeId,
    pub level: usize,
    /// Position among the parent's children, `0..s-1`.
    pub sibling: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GatherTree {
    members: Vec<NodeId>,
    s: usize,
    level_sizes: Vec<usize>,
}

impl GatherTree {
    pub fn build(component: &[NodeId], s: usize) -> Result<Self> {
        if s < 2 {
            return param(format!("branching must be at least 2, got {s}"));
        }
        if component.is_empty() {
            return param("empty component");
        }
        let mut members = component.to_vec();
        members.sort_unstable();
        members.dedup();
        let mut level_sizes = vec![members.len()];
        while *level_sizes.last().unwrap() > 1 {
            let last = *level_sizes.last().unwrap();
            level_sizes.push(last.div_ceil(s));
        }
        Ok(Self { members, s, level_sizes })
    }

    pub fn root(&self) -> NodeId {
        self.members[0]
    }

    pub fn members(&self) -> &[NodeId] {
        &self.members
    }

    pub fn branching(&self) -> usize {
        self.s
    }

    /// `|S_0|, |S_1|, ..., 1`.
    pub fn level_sizes(&self) -> &[usize] {
        &self.level_sizes
    }

    /// Number of transfer levels below the root.
    pub fn depth(&self) -> usize {
        self.level_sizes.len() - 1
    }

    pub fn rank_of(&self, v: NodeId) -> Option<usize> {
        self.members.binary_search(&v).ok()
    }

    /// `(level, parent rank, sibling index)` for a nonzero rank.
    pub fn role_for_rank(rank: usize, s: usize) -> Option<(usize, usize, usize)> {
        if rank == 0 {
            return None;
        }
        let mut level = 0;
        let mut unit = 1usize;
        while rank.is_multiple_of(unit * s) {
            unit *= s;
            level += 1;
        }
        let parent = rank - rank % (unit * s);
        Some((level, parent, (rank / unit) % s - 1))
    }

    pub fn role(&self, v: NodeId) -> Option<TreeRole> {
        let rank = self.rank_of(v)?;
        let (level, parent, sibling) = Self::role_for_rank(rank, self.s)?;
        Some(TreeRole { parent: self.members[parent], level, sibling })
    }

    /// Members in `S_i` for each level `i`.
    pub fn levels(&self) -> Vec<Vec<NodeId>> {
        let mut unit = 1usize;
        self.level_sizes
            .iter()
            .map(|_| {
                let lvl = self.members.iter().enumerate().filter(|(x, _)| x % unit == 0).map(|(_, &v)| v).collect();
                unit = unit.saturating_mul(self.s);
                lvl
            })
            .collect()
    }
}

pub struct TreeGatherOutcome<V> {
    /// Aggregated value at every node that never sent (the roots).
    pub values: Vec<Option<V>>,
    pub records: Vec<StageRecord>,
    /// Pieces per stream.
    pub pieces_per_stream: usize,
}

struct GatherNode {
    id: NodeId,
    n: usize,
    word: u32,
    pieces_per_stream: usize,
    send: Option<(TreeRole, Vec<Option<Payload>>)>,
    recv: Vec<Vec<Option<Payload>>>,
}

impl NodeProgram for GatherNode {
    fn step(&mut self, ctx: &mut Ctx<'_, '_>) -> Result<Status> {
        let t = ctx.round() as usize;
        let n = self.n;
        let big_f = self.pieces_per_stream;
        if t % 2 == 1 {
            if t >= 3 {
                let block = (t - 3) / 2;
                for m in ctx.inbox() {
                    let j = block * n + (m.src as usize + 2 * n - self.id as usize - 1) % n;
                    let (k, f) = (j / big_f, j % big_f);
                    if k >= self.recv.len() {
                        self.recv.resize(k + 1, Vec::new());
                    }
                    let slots = &mut self.recv[k];
                    if slots.is_empty() {
                        slots.resize(big_f, None);
                    }
                    if slots[f].replace(m.payload.clone()).is_some() {
                        return Err(Error::ProtocolFailure(format!("gather slot {j} delivered twice to {}", self.id)));
                    }
                }
            }
            if let Some((role, pieces)) = &self.send {
                let block = (t - 1) / 2;
                let base = role.sibling * big_f;
                let lo = (block * n).max(base);
                let hi = ((block + 1) * n).min(base + big_f);
                for j in lo..hi {
                    let Some(piece) = &pieces[j - base] else {
                        continue;
                    };
                    let relay = (role.parent as usize + 1 + j) % n;
                    let mut w = BitWriter::new();
                    w.push(role.parent as u64, self.word);
                    append(&mut w, piece);
                    ctx.send(relay as NodeId, w.finish())?;
                }
                if hi == base + big_f {
                    self.send = None;
                }
            }
        } else {
            for m in ctx.inbox() {
                let mut r = m.payload.reader();
                let parent = r.read(self.word)? as NodeId;
                let mut w = BitWriter::new();
                while r.remaining() > 0 {
                    let take = r.remaining().min(64) as u32;
                    w.push(r.read(take)?, take);
                }
                ctx.send(parent, w.finish())?;
            }
        }
        Ok(if self.send.is_some() { Status::Active } else { Status::Done })
    }
}

fn append(w: &mut BitWriter, p: &Payload) {
    let mut r = p.reader();
    while r.remaining() > 0 {
        let take = r.remaining().min(64) as u32;
        w.push(r.read(take).expect("within payload"), take);
    }
}

/// Aggregates `values` up the trees given by `roles` (`None` for roots and
/// for nodes outside every tree). All encoded streams must have the same bit
/// length. Each level is one stage labelled `tree-gather`.
pub fn tree_gather<V>(
    net: &mut Network,
    roles: &[Option<TreeRole>],
    mut values: Vec<Option<V>>,
    encode: impl Fn(&V) -> (Vec<u64>, usize),
    decode: impl Fn(&[u64], usize) -> Result<V>,
    mut combine: impl FnMut(&mut V, V) -> Result<()>,
) -> Result<TreeGatherOutcome<V>> {
    let n = net.n();
    if roles.len() != n || values.len() != n {
        return param("tree gather needs one role and one value slot per node");
    }
    let word = net.word_bits();
    let chunk = net.bandwidth() - word as usize;
    let mut bits = None;
    for (v, role) in roles.iter().enumerate() {
        if role.is_some() && values[v].is_none() {
            return param(format!("node {v} has a parent but no value"));
        }
    }
    let senders: Vec<usize> = (0..n).filter(|&v| roles[v].is_some()).collect();
    for &v in &senders {
        let b = encode(values[v].as_ref().unwrap()).1;
        if *bits.get_or_insert(b) != b {
            return Err(Error::Incompatible(format!("stream of {b} bits at node {v}, expected {}", bits.unwrap())));
        }
    }
    let stream_bits = bits.unwrap_or(0);
    let pieces_per_stream = crate::sim::stream_fragments(stream_bits, chunk);
    let max_level = senders.iter().map(|&v| roles[v].unwrap().level).max();
    let mut records = Vec::new();
    if let Some(max_level) = max_level {
        for level in 0..=max_level {
            let mut progs: Vec<GatherNode> = (0..n)
                .map(|v| GatherNode { id: v as NodeId, n, word, pieces_per_stream, send: None, recv: Vec::new() })
                .collect();
            let mut any = false;
            for &v in &senders {
                let role = roles[v].unwrap();
                if role.level == level {
                    let (words, b) = encode(values[v].as_ref().unwrap());
                    let pieces: Vec<Option<Payload>> = split_stream(&words, b, chunk)
                        .into_iter()
                        .map(|p| p.words().iter().any(|&x| x != 0).then_some(p))
                        .collect();
                    if pieces.iter().any(Option::is_some) {
                        progs[v].send = Some((role, pieces));
                        any = true;
                    }
                    values[v] = None;
                }
            }
            if !any {
                continue;
            }
            records.push(net.run_stage("tree-gather", &mut progs)?);
            for (v, prog) in progs.into_iter().enumerate() {
                for slots in prog.recv {
                    if slots.is_empty() {
                        continue;
                    }
                    let pieces: Vec<Payload> = slots
                        .into_iter()
                        .enumerate()
                        .map(|(f, p)| {
                            p.unwrap_or_else(|| {
                                let bits = chunk.min(stream_bits - f * chunk);
                                Payload::from_words(&vec![0; bits.div_ceil(64)], bits)
                            })
                        })
                        .collect();
                    let (words, got_bits) = join_stream(&pieces);
                    if got_bits != stream_bits {
                        return Err(Error::Corruption(format!("reassembled {got_bits} bits, expected {stream_bits}")));
                    }
                    let child = decode(&words, got_bits)?;
                    match values[v].as_mut() {
                        Some(acc) => combine(acc, child)?,
                        None => {
                            return Err(Error::ProtocolFailure(format!("node {v} received a stream without a value")))
                        }
                    }
                }
            }
        }
    }
    Ok(TreeGatherOutcome { values, records, pieces_per_stream })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SimConfig;

    #[test]
    fn small_component_is_one_level() {
        let t = GatherTree::build(&[9, 4, 7], 4).unwrap();
        assert_eq!(t.root(), 4);
        assert_eq!(t.level_sizes(), &[3, 1]);
        assert_eq!(t.role(9).unwrap().parent, 4);
        assert_eq!(t.role(4), None);
    }

    #[test]
    fn square_component_has_two_levels() {
        let members: Vec<NodeId> = (0..16).collect();
        let t = GatherTree::build(&members, 4).unwrap();
        assert_eq!(t.level_sizes(), &[16, 4, 1]);
        assert_eq!(t.depth(), 2);
        assert_eq!(t.role(5).unwrap(), TreeRole { parent: 4, level: 0, sibling: 0 });
        assert_eq!(t.role(8).unwrap(), TreeRole { parent: 0, level: 1, sibling: 1 });
    }

    #[test]
    fn level_sizes_follow_ceiling_chain() {
        let members: Vec<NodeId> = (0..300).map(|i| i * 3 % 512).collect();
        let t = GatherTree::build(&members, 8).unwrap();
        assert_eq!(t.level_sizes(), &[300, 38, 5, 1]);
        let levels = t.levels();
        assert_eq!(levels.iter().map(Vec::len).collect::<Vec<_>>(), vec![300, 38, 5, 1]);
        for v in t.members() {
            if let Some(r) = t.role(*v) {
                assert!(levels[r.level + 1].contains(&r.parent));
                assert!(levels[r.level].contains(v));
                assert!(!levels[r.level + 1].contains(v));
            }
        }
    }

    #[test]
    fn branching_rule_clamps_to_two_at_desk_scale() {
        assert_eq!(gather_branching(256, 0.2), (2, false));
    }

    /// Aggregates sums of fixed-width counters; the root must see the totals.
    #[test]
    fn sums_reach_the_root() {
        let n = 20;
        let mut net = Network::new(SimConfig { trace: true, ..SimConfig::new(n, 0) }).unwrap();
        let comps: [Vec<NodeId>; 2] = [(0..13).collect(), (13..20).collect()];
        let mut roles = vec![None; n];
        for c in &comps {
            let t = GatherTree::build(c, 3).unwrap();
            for &v in c {
                roles[v as usize] = t.role(v);
            }
        }
        let values: Vec<Option<Vec<u64>>> = (0..n).map(|v| Some(vec![v as u64, 1, 1000 + v as u64])).collect();
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
        assert_eq!(out.values[0], Some(vec![78, 13, 13_078]));
        assert_eq!(out.values[13], Some(vec![112, 7, 7112]));
        assert!(out.values[5].is_none());
        let pieces = out.pieces_per_stream as u64;
        assert!(net.transcript().messages_total <= 2 * pieces * 18);
        assert_eq!(net.transcript().messages_total % 2, 0);
        crate::sim::check_link_rule(net.trace().unwrap()).unwrap();
    }
}
