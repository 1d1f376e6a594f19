//! Message-metered distributed Borůvka on the clique.
//!
//! Each phase has three stages, all labelled `lm-mst`:
//!
//! * probe: a node asks the other endpoint of its lightest uneliminated
//!   incident edges for their labels, in batches of doubling size, until it
//!   finds one leaving its component. Edges found inside the component are
//!   eliminated for good, since components only grow.
//! * merge: candidates go to the component leader, which keeps the lightest
//!   and reports it to the coordinator (node 0). The coordinator merges the
//!   reported components with union-find and tells every leader whose label
//!   changes. Such a leader attaches itself to the new leader and pushes the
//!   label down its subtree.
//! * announce: the member owning a chosen edge tells the other endpoint.
//!
//! A label is the smallest id in its component. The run ends when no
//! candidate reaches the coordinator, which then broadcasts a halt.

use crate::error::{param, Error, Result};
use crate::graph::{ceil_log2, Dsu, Forest, NodeId, WeightKey, WeightedGraph};
use crate::protocols::check_bound;
use crate::sim::{BitWriter, Ctx, Network, NodeProgram, Payload, Status};

pub const LABEL: &str = "lm-mst";

#[derive(Clone, Debug)]
pub struct LmMstOutcome {
    pub forest: Forest,
    /// Phases that merged at least two components.
    pub phases: usize,
    pub rounds: u64,
    pub messages: u64,
    pub phase_messages: Vec<u64>,
}

/// Bit widths of a key on the wire: raw weights are at most `n^2`.
#[derive(Clone, Copy, Debug)]
pub struct KeyCodec {
    pub word: u32,
    pub weight: u32,
}

impl KeyCodec {
    pub fn new(n: usize) -> Self {
        let word = ceil_log2(n as u64).max(1);
        Self { word, weight: 2 * word + 1 }
    }

    pub fn key_bits(&self) -> u32 {
        self.weight + 2 * self.word
    }

    pub fn check(&self, graph: &WeightedGraph) -> Result<()> {
        if graph.weight_bits() > self.weight {
            return param(format!("weights need {} bits, the wire format allows {}", graph.weight_bits(), self.weight));
        }
        Ok(())
    }

    pub fn push(&self, w: &mut BitWriter, key: &WeightKey) {
        w.push(key.w, self.weight).push(key.lo as u64, self.word).push(key.hi as u64, self.word);
    }

    pub fn read(&self, r: &mut crate::sim::BitReader<'_>) -> Result<WeightKey> {
        let w = r.read(self.weight)?;
        let (lo, hi) = (r.read(self.word)? as NodeId, r.read(self.word)? as NodeId);
        if lo >= hi {
            return Err(Error::Corruption(format!("malformed key ({w}, {lo}, {hi})")));
        }
        Ok(WeightKey { w, lo, hi })
    }
}

struct NodeState<'g> {
    id: NodeId,
    incident: &'g [WeightKey],
    eliminated: Vec<bool>,
    /// First position not known to be eliminated.
    ptr: usize,
    label: NodeId,
    children: Vec<NodeId>,
    chosen: Vec<WeightKey>,
    candidate: Option<(WeightKey, NodeId)>,
}

struct ProbeNode<'s, 'g> {
    st: &'s mut NodeState<'g>,
    word: u32,
    batch: usize,
    /// `(neighbour, position)` of the outstanding batch, sorted by neighbour.
    pending: Vec<(NodeId, usize)>,
    replies: Vec<Option<NodeId>>,
    searching: bool,
}

impl ProbeNode<'_, '_> {
    fn settle(&mut self) {
        let st = &mut *self.st;
        while st.ptr < st.incident.len() && st.eliminated[st.ptr] {
            st.ptr += 1;
        }
        if st.ptr == st.incident.len() {
            self.searching = false;
        } else if let Some(l) = self.replies[st.ptr] {
            st.candidate = Some((st.incident[st.ptr], l));
            self.searching = false;
        }
    }
}

impl NodeProgram for ProbeNode<'_, '_> {
    fn step(&mut self, ctx: &mut Ctx<'_, '_>) -> Result<Status> {
        if ctx.round().is_multiple_of(2) {
            let mut w = BitWriter::new();
            w.push(self.st.label as u64, self.word);
            let reply = w.finish();
            for m in ctx.inbox() {
                ctx.send(m.src, reply.clone())?;
            }
            return Ok(if self.searching { Status::Active } else { Status::Done });
        }
        if ctx.round() > 1 {
            for m in ctx.inbox() {
                let label = m.payload.reader().read(self.word)? as NodeId;
                let at = self
                    .pending
                    .binary_search_by_key(&m.src, |p| p.0)
                    .map_err(|_| Error::ProtocolFailure(format!("unsolicited label reply at {}", self.st.id)))?;
                let pos = self.pending[at].1;
                if label == self.st.label {
                    self.st.eliminated[pos] = true;
                } else {
                    self.replies[pos] = Some(label);
                }
            }
            self.pending.clear();
        }
        if self.searching {
            self.settle();
        }
        if self.searching {
            let st = &*self.st;
            let mut pos = st.ptr;
            while self.pending.len() < self.batch && pos < st.incident.len() {
                if !st.eliminated[pos] && self.replies[pos].is_none() {
                    self.pending.push((st.incident[pos].other(st.id), pos));
                }
                pos += 1;
            }
            self.batch *= 2;
            self.pending.sort_unstable();
            for &(v, _) in &self.pending {
                ctx.send(v, Payload::from_words(&[1], 1))?;
            }
        }
        Ok(if self.searching { Status::Active } else { Status::Done })
    }
}

struct MergeNode<'s, 'g> {
    st: &'s mut NodeState<'g>,
    codec: KeyCodec,
    n: usize,
    /// Set at the member that owns its component's chosen edge.
    owns: Option<WeightKey>,
    /// Coordinator only: whether any component reported.
    any_report: bool,
}

impl NodeProgram for MergeNode<'_, '_> {
    fn step(&mut self, ctx: &mut Ctx<'_, '_>) -> Result<Status> {
        let codec = self.codec;
        let id = self.st.id;
        let word = codec.word;
        match ctx.round() {
            1 => {
                if let Some((key, other)) = self.st.candidate {
                    if self.st.label != id {
                        let mut w = BitWriter::new();
                        codec.push(&mut w, &key);
                        w.push(other as u64, word);
                        ctx.send(self.st.label, w.finish())?;
                    }
                }
                Ok(if self.st.label == id { Status::Active } else { Status::Done })
            }
            2 => {
                if self.st.label != id {
                    // A member owning the chosen edge learns it in round 3.
                    return Ok(Status::Done);
                }
                let mut best: Option<(WeightKey, NodeId, NodeId)> = self.st.candidate.map(|(k, o)| (k, o, id));
                for m in ctx.inbox() {
                    let mut r = m.payload.reader();
                    let key = codec.read(&mut r)?;
                    let other = r.read(word)? as NodeId;
                    if best.is_none_or(|b| key < b.0) {
                        best = Some((key, other, m.src));
                    }
                }
                if let Some((key, other, owner)) = best {
                    if owner == id {
                        self.owns = Some(key);
                    } else {
                        let mut w = BitWriter::new();
                        codec.push(&mut w, &key);
                        ctx.send(owner, w.finish())?;
                    }
                    if id != 0 {
                        let mut w = BitWriter::new();
                        codec.push(&mut w, &key);
                        w.push(other as u64, word);
                        ctx.send(0, w.finish())?;
                    } else {
                        self.st.candidate = Some((key, other));
                    }
                }
                Ok(Status::Active)
            }
            3 => {
                if id == 0 {
                    let mut reports: Vec<(NodeId, NodeId)> = Vec::new();
                    if let Some((_, other)) = self.st.candidate {
                        reports.push((0, other));
                    }
                    for m in ctx.inbox() {
                        let mut r = m.payload.reader();
                        codec.read(&mut r)?;
                        reports.push((m.src, r.read(word)? as NodeId));
                    }
                    self.any_report = !reports.is_empty();
                    if reports.is_empty() {
                        for v in 1..self.n as NodeId {
                            ctx.send(v, tagged(None, word))?;
                        }
                        return Ok(Status::Done);
                    }
                    let mut dsu = Dsu::new(self.n);
                    for &(a, b) in &reports {
                        dsu.union(a as usize, b as usize);
                    }
                    let mut min_of = vec![NodeId::MAX; self.n];
                    for &(a, b) in &reports {
                        for x in [a, b] {
                            let root = dsu.find(x as usize);
                            min_of[root] = min_of[root].min(x);
                        }
                    }
                    let mut leaders: Vec<NodeId> = reports.iter().flat_map(|&(a, b)| [a, b]).collect();
                    leaders.sort_unstable();
                    leaders.dedup();
                    for l in leaders {
                        let new = min_of[dsu.find(l as usize)];
                        if new != l {
                            ctx.send(l, tagged(Some(new), word))?;
                        }
                    }
                } else if let Some(m) = ctx.inbox().first() {
                    if self.st.label != id {
                        self.owns = Some(codec.read(&mut m.payload.reader())?);
                    }
                }
                Ok(Status::Active)
            }
            _ => {
                for m in ctx.inbox() {
                    let mut r = m.payload.reader();
                    if !r.read_bool()? {
                        // Halt from the coordinator, or a former leader attaching.
                        if m.src != 0 || ctx.round() != 4 {
                            self.st.children.push(m.src);
                        }
                        continue;
                    }
                    let new = r.read(word)? as NodeId;
                    self.st.label = new;
                    if ctx.round() == 4 {
                        ctx.send(new, tagged(None, word))?;
                    }
                    for &c in &self.st.children {
                        ctx.send(c, tagged(Some(new), word))?;
                    }
                }
                Ok(Status::Done)
            }
        }
    }
}

/// Control message: `None` is a bare signal, `Some(l)` carries a label.
fn tagged(label: Option<NodeId>, word: u32) -> Payload {
    let mut w = BitWriter::new();
    w.push_bool(label.is_some());
    if let Some(l) = label {
        w.push(l as u64, word);
    }
    w.finish()
}

struct AnnounceNode<'s, 'g> {
    st: &'s mut NodeState<'g>,
    codec: KeyCodec,
    owns: Option<WeightKey>,
}

impl NodeProgram for AnnounceNode<'_, '_> {
    fn step(&mut self, ctx: &mut Ctx<'_, '_>) -> Result<Status> {
        if ctx.round() == 1 {
            if let Some(key) = self.owns.take() {
                self.st.chosen.push(key);
                let mut w = BitWriter::new();
                self.codec.push(&mut w, &key);
                ctx.send(key.other(self.st.id), w.finish())?;
            }
        }
        for m in ctx.inbox() {
            let key = self.codec.read(&mut m.payload.reader())?;
            if !key.touches(self.st.id) || !self.st.incident.contains(&key) {
                return Err(Error::ProtocolFailure(format!("node {} told of foreign edge {key}", self.st.id)));
            }
            if !self.st.chosen.contains(&key) {
                self.st.chosen.push(key);
            }
        }
        Ok(Status::Done)
    }
}

/// Computes the minimum spanning forest of `graph`, whose edges are known to
/// their endpoints. Uses `O(m + n log n)` messages.
pub fn linear_messages_mst(net: &mut Network, graph: &WeightedGraph) -> Result<LmMstOutcome> {
    let n = net.n();
    if graph.n() != n {
        return param(format!("graph has {} nodes, network has {n}", graph.n()));
    }
    let codec = KeyCodec::new(n);
    codec.check(graph)?;
    if codec.key_bits() + codec.word > net.bandwidth() as u32 {
        return param("bandwidth too small for a key and a label");
    }
    let start = (net.transcript().rounds, net.transcript().messages_total);
    let mut states: Vec<NodeState> = (0..n as NodeId)
        .map(|v| {
            let incident = graph.incident(v);
            NodeState {
                id: v,
                incident,
                eliminated: vec![false; incident.len()],
                ptr: 0,
                label: v,
                children: Vec::new(),
                chosen: Vec::new(),
                candidate: None,
            }
        })
        .collect();
    let mut phases = 0;
    let mut phase_messages = Vec::new();
    loop {
        let before = net.transcript().messages_total;
        for st in &mut states {
            st.candidate = None;
        }
        let mut probes: Vec<ProbeNode> = states
            .iter_mut()
            .map(|st| {
                let d = st.incident.len();
                ProbeNode {
                    st,
                    word: codec.word,
                    batch: 1,
                    pending: Vec::new(),
                    replies: vec![None; d],
                    searching: true,
                }
            })
            .collect();
        net.run_stage(LABEL, &mut probes)?;
        drop(probes);
        let mut merges: Vec<MergeNode> =
            states.iter_mut().map(|st| MergeNode { st, codec, n, owns: None, any_report: false }).collect();
        net.run_stage(LABEL, &mut merges)?;
        let merged = merges[0].any_report;
        let owns: Vec<Option<WeightKey>> = merges.iter().map(|m| m.owns).collect();
        drop(merges);
        if merged {
            let mut ann: Vec<AnnounceNode> =
                states.iter_mut().zip(owns).map(|(st, owns)| AnnounceNode { st, codec, owns }).collect();
            net.run_stage(LABEL, &mut ann)?;
            phases += 1;
        }
        phase_messages.push(net.transcript().messages_total - before);
        if !merged {
            break;
        }
        if phases > ceil_log2(n as u64) as usize + 1 {
            return Err(Error::ProtocolFailure(format!("borůvka did not converge after {phases} phases")));
        }
    }
    check_bound(phases <= ceil_log2(n as u64) as usize, || format!("{phases} borůvka phases on {n} nodes"))?;
    let mut keys: Vec<WeightKey> = Vec::new();
    for st in &states {
        for k in &st.chosen {
            let other = &states[k.other(st.id) as usize];
            if !other.chosen.contains(k) {
                return Err(Error::ProtocolFailure(format!("endpoints disagree on output edge {k}")));
            }
            if k.lo == st.id {
                keys.push(*k);
            }
        }
    }
    let forest = Forest::new(WeightedGraph::from_keys(n, keys))?;
    let t = net.transcript();
    Ok(LmMstOutcome {
        forest,
        phases,
        rounds: t.rounds - start.0,
        messages: t.messages_total - start.1,
        phase_messages,
    })
}
