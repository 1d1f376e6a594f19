//! Metered Congested Clique simulator and message-efficient MST algorithms.

pub mod driver;
pub mod error;
pub mod experiments;
pub mod flight;
pub mod graph;
pub mod kwise;
pub mod mst;
pub mod protocols;
pub mod sim;
pub mod sketch;

pub use error::{Error, Result};
