//! Node programs for the point-to-point steps of the light-edge computation.

use std::collections::{BTreeMap, VecDeque};

use crate::error::{Error, Result};
use crate::graph::{KeyBound, NodeId, WeightKey};
use crate::mst::KeyCodec;
use crate::sim::{join_stream, split_stream, BitWriter, Ctx, NodeProgram, Payload, Status};

/// What a node learns about its component in one phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhaseTuple {
    pub label: NodeId,
    pub bound: KeyBound,
    /// Position among the component's members in id order; 0 at the leader.
    pub rank: usize,
    /// Gather-tree parent (the node itself at the leader).
    pub parent: NodeId,
}

impl PhaseTuple {
    pub fn encode(&self, codec: &KeyCodec) -> (Vec<u64>, usize) {
        let mut w = BitWriter::new();
        w.push(self.label as u64, codec.word);
        match self.bound {
            KeyBound::Infinite => {
                w.push_bool(true);
            }
            KeyBound::Finite(k) => {
                w.push_bool(false);
                codec.push(&mut w, &k);
            }
        }
        w.push(self.rank as u64, codec.word).push(self.parent as u64, codec.word);
        w.into_words()
    }

    pub fn decode(words: &[u64], bits: usize, codec: &KeyCodec) -> Result<Self> {
        let mut r = crate::sim::BitReader::new(words, bits);
        let label = r.read(codec.word)? as NodeId;
        let bound = if r.read_bool()? { KeyBound::Infinite } else { KeyBound::Finite(codec.read(&mut r)?) };
        let rank = r.read(codec.word)? as usize;
        let parent = r.read(codec.word)? as NodeId;
        Ok(Self { label, bound, rank, parent })
    }
}

/// Commander `i` sends every node its phase-`i` tuple, split into as many
/// pieces as the bandwidth requires (one piece per round).
pub struct TupleNode {
    pub outgoing: Vec<(NodeId, Vec<Payload>)>,
    pub pieces: BTreeMap<NodeId, Vec<Payload>>,
}

impl NodeProgram for TupleNode {
    fn step(&mut self, ctx: &mut Ctx<'_, '_>) -> Result<Status> {
        for m in ctx.inbox() {
            self.pieces.entry(m.src).or_default().push(m.payload.clone());
        }
        let r = ctx.round() as usize - 1;
        let mut more = false;
        for (dst, pieces) in &self.outgoing {
            if let Some(p) = pieces.get(r) {
                ctx.send(*dst, p.clone())?;
                more |= r + 1 < pieces.len();
            }
        }
        Ok(if more { Status::Active } else { Status::Done })
    }
}

pub fn tuple_pieces(t: &PhaseTuple, codec: &KeyCodec, bandwidth: usize) -> Vec<Payload> {
    let (words, bits) = t.encode(codec);
    split_stream(&words, bits, bandwidth)
}

pub fn tuple_from_pieces(pieces: &[Payload], codec: &KeyCodec) -> Result<PhaseTuple> {
    let (words, bits) = join_stream(pieces);
    PhaseTuple::decode(&words, bits, codec)
}

/// One round of bare signals: top-up requests and rebuild notices.
pub struct SignalNode {
    pub to: Vec<NodeId>,
    pub heard: Vec<NodeId>,
}

impl NodeProgram for SignalNode {
    fn step(&mut self, ctx: &mut Ctx<'_, '_>) -> Result<Status> {
        for &d in &self.to {
            ctx.send(d, Payload::from_words(&[1], 1))?;
        }
        self.heard.extend(ctx.inbox().iter().map(|m| m.src));
        Ok(Status::Done)
    }
}

/// A sampled edge as announced by a leader.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Notice {
    pub phase: usize,
    pub lo: NodeId,
    pub hi: NodeId,
    /// Whether `lo` is the endpoint inside the sender's component.
    pub lo_inside: bool,
}

/// Leaders announce sampled edges to both endpoints, one message per link
/// per round; endpoints check each announcement against their own tuples.
pub struct NotifyNode<'a> {
    pub id: NodeId,
    pub codec: KeyCodec,
    pub incident: &'a [WeightKey],
    pub tuples: &'a [PhaseTuple],
    pub queues: BTreeMap<NodeId, VecDeque<Notice>>,
    pub accepted: Vec<WeightKey>,
}

impl NotifyNode<'_> {
    fn encode(&self, n: &Notice) -> Payload {
        let w = self.codec.word;
        let mut b = BitWriter::new();
        b.push(n.phase as u64, w)
            .push(self.id as u64, w)
            .push(n.lo as u64, w)
            .push(n.hi as u64, w)
            .push_bool(n.lo_inside);
        b.finish()
    }

    /// Checks a notice from leader `src` (possibly this node) and records the edge.
    pub fn accept(&mut self, src: NodeId, n: &Notice) -> Result<()> {
        let me = self.id;
        let other = if n.lo == me {
            n.hi
        } else if n.hi == me {
            n.lo
        } else {
            return Err(Error::Corruption(format!("node {me} notified of non-incident edge ({}, {})", n.lo, n.hi)));
        };
        let key = self
            .incident
            .iter()
            .find(|e| e.other(me) == other)
            .copied()
            .ok_or_else(|| Error::Corruption(format!("node {me} has no edge to {other}")))?;
        let t = self
            .tuples
            .get(n.phase)
            .ok_or_else(|| Error::Corruption(format!("notice for unknown phase {}", n.phase)))?;
        let inside = (n.lo == me) == n.lo_inside;
        if inside && (t.label != src || !t.bound.admits(&key)) {
            return Err(Error::Corruption(format!(
                "edge {key} is not light for the component of {src} in phase {}",
                n.phase
            )));
        }
        if !inside && t.label == src {
            return Err(Error::Corruption(format!("edge {key} does not leave the component of {src}")));
        }
        self.accepted.push(key);
        Ok(())
    }
}

impl NodeProgram for NotifyNode<'_> {
    fn step(&mut self, ctx: &mut Ctx<'_, '_>) -> Result<Status> {
        let w = self.codec.word;
        for m in ctx.inbox() {
            let mut r = m.payload.reader();
            let phase = r.read(w)? as usize;
            let label = r.read(w)? as NodeId;
            if label != m.src {
                return Err(Error::Corruption(format!("notice from {} claims label {label}", m.src)));
            }
            let n = Notice { phase, lo: r.read(w)? as NodeId, hi: r.read(w)? as NodeId, lo_inside: r.read_bool()? };
            self.accept(m.src, &n)?;
        }
        let mut sends = Vec::new();
        for (&dst, q) in self.queues.iter_mut() {
            if let Some(n) = q.pop_front() {
                sends.push((dst, n));
            }
        }
        self.queues.retain(|_, q| !q.is_empty());
        for (dst, n) in sends {
            let p = self.encode(&n);
            ctx.send(dst, p)?;
        }
        Ok(if self.queues.is_empty() { Status::Done } else { Status::Active })
    }
}
