//! Synchronous Congested Clique engine with exact round and message metering.

mod engine;
mod fragment;
mod payload;
mod transcript;

pub use engine::{check_link_rule, run, Ctx, Network, NodeProgram, SimConfig, Status, TraceEntry};
pub use fragment::{fragment, join_stream, reassemble, split_stream, stream_fragments};
pub use payload::{extract_bits, BitReader, BitWriter, Message, Payload};
pub use transcript::{Counts, RoundTranscript, StageRecord};

#[cfg(test)]
mod tests;
