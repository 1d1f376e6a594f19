use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub protocol: String,
    /// Enclosing scopes joined with `/`.
    pub scope: String,
    pub rounds: u64,
    pub messages: u64,
}

/// Exact round and message accounting for one simulation.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTranscript {
    pub rounds: u64,
    pub messages_total: u64,
    /// Keyed by the protocol label of the stage that sent the message.
    pub by_protocol: BTreeMap<String, u64>,
    /// Keyed by the outermost scope (the algorithm step).
    pub by_step: BTreeMap<String, u64>,
    pub by_scope: BTreeMap<String, u64>,
    pub rounds_by_protocol: BTreeMap<String, u64>,
    pub sent: Vec<u64>,
    pub received: Vec<u64>,
    pub stages: Vec<StageRecord>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub rounds: u64,
    pub messages: u64,
}

impl RoundTranscript {
    pub fn new(n: usize) -> Self {
        Self { sent: vec![0; n], received: vec![0; n], ..Self::default() }
    }

    pub(crate) fn record_stage(&mut self, stage: StageRecord) {
        self.rounds += stage.rounds;
        self.messages_total += stage.messages;
        let step = stage.scope.split('/').next().filter(|s| !s.is_empty()).unwrap_or(&stage.protocol);
        *self.by_step.entry(step.to_string()).or_default() += stage.messages;
        *self.by_protocol.entry(stage.protocol.clone()).or_default() += stage.messages;
        *self.rounds_by_protocol.entry(stage.protocol.clone()).or_default() += stage.rounds;
        let key =
            if stage.scope.is_empty() { stage.protocol.clone() } else { format!("{}/{}", stage.scope, stage.protocol) };
        *self.by_scope.entry(key).or_default() += stage.messages;
        self.stages.push(stage);
    }

    /// Totals, or only the stages whose protocol label or step equals `label`.
    /// Unknown labels give zeros.
    pub fn metrics(&self, label: Option<&str>) -> Counts {
        match label {
            None => Counts { rounds: self.rounds, messages: self.messages_total },
            Some(l) => self.stages.iter().filter(|s| s.protocol == l || s.scope.split('/').next() == Some(l)).fold(
                Counts::default(),
                |c, s| Counts { rounds: c.rounds + s.rounds, messages: c.messages + s.messages },
            ),
        }
    }

    pub fn step_messages(&self, step: &str) -> u64 {
        self.by_step.get(step).copied().unwrap_or(0)
    }

    /// The JSON export: rounds, totals, and both label breakdowns.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "rounds": self.rounds,
            "messages_total": self.messages_total,
            "by_protocol": self.by_protocol,
            "by_step": self.by_step,
        })
    }
}
