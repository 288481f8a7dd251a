//! Slotted-time simulator for heterogeneous multiple-access networks.
//!
//! Time advances one slot at a time. In every slot each live node either
//! transmits or stays silent; the channel outcome is SUCCESS when exactly one
//! node transmitted, COLLIDED when two or more did and IDLE otherwise.
//! Protocol nodes (ALOHA, TDMA, CSMA and the two backoff ALOHA variants)
//! decide internally; agent and AWARE nodes receive their decisions from the
//! caller.

mod env;
mod log;
mod node;
mod scenario;

pub use env::{AgentDecision, Environment, SlotResult};
pub use log::{Segment, SlotEntry, TrajectoryLog, TrajectoryRecord};
pub use node::{node_decide, node_feedback, Backoff, NodeState};
pub use scenario::{NodeConfig, NodeKind, ScenarioSpec, SCHEMA_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::NodeId;

/// Channel outcome of a single slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SlotOutcome {
    Success,
    Collided,
    Idle,
}

impl SlotOutcome {
    /// Classifies a slot by its number of transmitters.
    pub fn from_transmitters(count: usize) -> Self {
        match count {
            0 => SlotOutcome::Idle,
            1 => SlotOutcome::Success,
            _ => SlotOutcome::Collided,
        }
    }

    /// One-letter code used in CSV output and prompts.
    pub fn code(self) -> char {
        match self {
            SlotOutcome::Success => 'S',
            SlotOutcome::Collided => 'C',
            SlotOutcome::Idle => 'I',
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MacError {
    #[error("invalid scenario at `{path}`: {reason}")]
    InvalidSpec { path: String, reason: String },
    #[error("could not read scenario: {0}")]
    Parse(String),
    #[error("node {node} is a live agent but no decision was supplied")]
    MissingDecision { node: NodeId },
    #[error("decision for node {node} has probability {prob} outside [0, 1]")]
    InvalidDecision { node: NodeId, prob: f64 },
}
