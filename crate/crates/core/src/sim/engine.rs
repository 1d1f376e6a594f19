use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::payload::{Message, Payload};
use super::transcript::{RoundTranscript, StageRecord};
use crate::error::{param, Error, Result};
use crate::graph::{ceil_log2, NodeId};
use crate::kwise::make_tag;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    /// Words of `ceil(log2 n)` bits per message.
    pub beta: usize,
    pub seed: u64,
    /// Per-stage safety cutoff.
    pub max_rounds: u64,
    /// Runs node handlers in a seeded random order each round instead of by id.
    #[serde(default)]
    pub scramble: Option<u64>,
    /// Keeps a `(round, src, dst)` log of every message.
    #[serde(default)]
    pub trace: bool,
}

impl SimConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self { n, beta: 8, seed, max_rounds: 1_000_000, scramble: None, trace: false }
    }

    pub fn word_bits(&self) -> u32 {
        ceil_log2(self.n as u64).max(1)
    }

    /// `B = beta * ceil(log2 n)` bits.
    pub fn bandwidth(&self) -> usize {
        self.beta * self.word_bits() as usize
    }

    /// Parses `key = value` lines (`n`, `beta`, `seed`, `max_rounds`); `#`
    /// starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SimConfig::new(0, 0);
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Parse { line: i + 1, msg };
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("expected key = value, got {line:?}")))?;
            let v = v.trim();
            let num = |v: &str| v.parse::<u64>().map_err(|e| bad(format!("{v:?}: {e}")));
            match k.trim() {
                "n" => cfg.n = num(v)? as usize,
                "beta" => cfg.beta = num(v)? as usize,
                "seed" => cfg.seed = num(v)?,
                "max_rounds" => cfg.max_rounds = num(v)?,
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return param(format!("need n >= 2, got {}", self.n));
        }
        if self.beta == 0 {
            return param("beta must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Active,
    Done,
}

/// One node's protocol logic for a stage. `step` runs once per round with the
/// messages delivered at the end of the previous round. A node that returned
/// [`Status::Done`] is called again only if new messages arrive.
pub trait NodeProgram {
    fn step(&mut self, ctx: &mut Ctx<'_, '_>) -> Result<Status>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub round: u64,
    pub src: NodeId,
    pub dst: NodeId,
}

struct Outbox<'a> {
    stamps: &'a mut [u32],
    stamp: u32,
    next: &'a mut [Vec<Message>],
    sent: &'a mut [u64],
    count: u64,
    trace: Option<&'a mut Vec<TraceEntry>>,
    global_round: u64,
}

pub struct Ctx<'a, 'o> {
    node: NodeId,
    round: u64,
    n: usize,
    bandwidth: usize,
    word_bits: u32,
    stage_seed: u64,
    inbox: &'a [Message],
    out: &'a mut Outbox<'o>,
}

impl<'a> Ctx<'a, '_> {
    pub fn node(&self) -> NodeId {
        self.node
    }

    /// 1-based round within the current stage.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn word_bits(&self) -> u32 {
        self.word_bits
    }

    pub fn inbox(&self) -> &'a [Message] {
        self.inbox
    }

    /// Seed for node-private randomness, distinct per stage and node.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(make_tag(&[self.stage_seed, self.node as u64]))
    }

    pub fn send(&mut self, dst: NodeId, payload: Payload) -> Result<()> {
        if dst as usize >= self.n {
            return Err(Error::ModelViolation(format!("node {} sent to nonexistent node {dst}", self.node)));
        }
        if payload.bits() > self.bandwidth {
            return Err(Error::ModelViolation(format!(
                "node {} sent {} bits to {dst}, bandwidth is {}",
                self.node,
                payload.bits(),
                self.bandwidth
            )));
        }
        let slot = self.node as usize * self.n + dst as usize;
        if self.out.stamps[slot] == self.out.stamp {
            return Err(Error::ModelViolation(format!(
                "node {} sent twice to {dst} in round {}",
                self.node, self.round
            )));
        }
        self.out.stamps[slot] = self.out.stamp;
        self.out.sent[self.node as usize] += 1;
        self.out.count += 1;
        if let Some(t) = self.out.trace.as_deref_mut() {
            t.push(TraceEntry { round: self.out.global_round, src: self.node, dst });
        }
        self.out.next[dst as usize].push(Message { src: self.node, dst, payload });
        Ok(())
    }
}

/// The clique: runs labelled stages one after another and meters them.
pub struct Network {
    cfg: SimConfig,
    transcript: RoundTranscript,
    stamps: Vec<u32>,
    stamp: u32,
    global_round: u64,
    scopes: Vec<String>,
    inboxes: Vec<Vec<Message>>,
    next: Vec<Vec<Message>>,
    trace: Option<Vec<TraceEntry>>,
    stage_count: u64,
    deadline: Option<Instant>,
}

impl Network {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n;
        Ok(Self {
            transcript: RoundTranscript::new(n),
            stamps: vec![0; n * n],
            stamp: 0,
            global_round: 0,
            scopes: Vec::new(),
            inboxes: vec![Vec::new(); n],
            next: vec![Vec::new(); n],
            trace: cfg.trace.then(Vec::new),
            stage_count: 0,
            deadline: None,
            cfg,
        })
    }

    /// Stages fail with [`Error::Timeout`] once the wall clock passes `deadline`.
    pub fn set_deadline(&mut self, deadline: Option<Instant>) {
        self.deadline = deadline;
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn n(&self) -> usize {
        self.cfg.n
    }

    pub fn bandwidth(&self) -> usize {
        self.cfg.bandwidth()
    }

    pub fn word_bits(&self) -> u32 {
        self.cfg.word_bits()
    }

    pub fn transcript(&self) -> &RoundTranscript {
        &self.transcript
    }

    pub fn into_transcript(self) -> RoundTranscript {
        self.transcript
    }

    pub fn trace(&self) -> Option<&[TraceEntry]> {
        self.trace.as_deref()
    }

    pub fn scope_path(&self) -> String {
        self.scopes.join("/")
    }

    /// Runs `f` with `scope` pushed onto the label path of every stage it starts.
    pub fn scoped<T>(&mut self, scope: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        self.scopes.push(scope.to_string());
        let out = f(self);
        self.scopes.pop();
        out
    }

    /// Runs one synchronous stage until every program is done and no message
    /// is in flight. Rounds are counted up to the last round with a send
    /// (at least 1).
    pub fn run_stage<P: NodeProgram>(&mut self, protocol: &str, programs: &mut [P]) -> Result<StageRecord> {
        let n = self.cfg.n;
        if programs.len() != n {
            return param(format!("stage {protocol:?} has {} programs for {n} nodes", programs.len()));
        }
        self.stage_count += 1;
        let stage_seed = make_tag(&[self.cfg.seed, self.stage_count]);
        let mut order: Vec<usize> = (0..n).collect();
        let mut shuffler = self.cfg.scramble.map(|s| ChaCha8Rng::seed_from_u64(make_tag(&[s, self.stage_count])));
        let mut done = vec![false; n];
        let mut messages = 0u64;
        let mut last_send = 0u64;
        let mut round = 0u64;
        loop {
            round += 1;
            if round > self.cfg.max_rounds {
                return Err(Error::ProtocolFailure(format!(
                    "stage {protocol:?} exceeded {} rounds",
                    self.cfg.max_rounds
                )));
            }
            if self.deadline.is_some_and(|d| Instant::now() > d) {
                return Err(Error::Timeout(format!("wall-clock budget exhausted in stage {protocol:?}")));
            }
            self.global_round += 1;
            self.stamp = self.stamp.wrapping_add(1);
            if self.stamp == 0 {
                self.stamps.fill(0);
                self.stamp = 1;
            }
            if let Some(rng) = shuffler.as_mut() {
                order.shuffle(rng);
            }
            let mut outbox = Outbox {
                stamps: &mut self.stamps,
                stamp: self.stamp,
                next: &mut self.next,
                sent: &mut self.transcript.sent,
                count: 0,
                trace: self.trace.as_mut(),
                global_round: self.global_round,
            };
            for &v in &order {
                let inbox = std::mem::take(&mut self.inboxes[v]);
                if done[v] && inbox.is_empty() {
                    self.inboxes[v] = inbox;
                    continue;
                }
                let mut ctx = Ctx {
                    node: v as NodeId,
                    round,
                    n,
                    bandwidth: self.cfg.bandwidth(),
                    word_bits: self.cfg.word_bits(),
                    stage_seed,
                    inbox: &inbox,
                    out: &mut outbox,
                };
                let status = programs[v].step(&mut ctx)?;
                done[v] = status == Status::Done;
                let mut inbox = inbox;
                inbox.clear();
                self.inboxes[v] = inbox;
            }
            let sent = outbox.count;
            if sent > 0 {
                messages += sent;
                last_send = round;
            }
            std::mem::swap(&mut self.inboxes, &mut self.next);
            for (v, inbox) in self.inboxes.iter().enumerate() {
                self.transcript.received[v] += inbox.len() as u64;
            }
            if sent == 0 && done.iter().all(|&d| d) {
                break;
            }
        }
        let record = StageRecord {
            protocol: protocol.to_string(),
            scope: self.scope_path(),
            rounds: last_send.max(1),
            messages,
        };
        self.transcript.record_stage(record.clone());
        Ok(record)
    }
}

/// Runs a single stage on a fresh network and returns the final programs with
/// the transcript.
pub fn run<P: NodeProgram>(mut programs: Vec<P>, cfg: SimConfig, protocol: &str) -> Result<(Vec<P>, RoundTranscript)> {
    let mut net = Network::new(cfg)?;
    net.run_stage(protocol, &mut programs)?;
    Ok((programs, net.into_transcript()))
}

/// Post-hoc link check over a message log: no ordered pair carries two
/// messages in one round.
pub fn check_link_rule(trace: &[TraceEntry]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for t in trace {
        if !seen.insert((t.round, t.src, t.dst)) {
            return Err(Error::ModelViolation(format!(
                "pair ({}, {}) used twice in global round {}",
                t.src, t.dst, t.round
            )));
        }
    }
    Ok(())
}
