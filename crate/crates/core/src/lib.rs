//! Core library for cpnet: slotted MAC and fluid TCP simulators, a constrained
//! strategy DSL, the AWARE oracle, fairness metrics, completion backends and
//! the agent orchestration loop that ties them together.
//!
//! Every stochastic component draws from seeded ChaCha streams, so a scenario
//! plus a seed fully determines a run when the scripted backend is used.

pub mod agent;
pub mod backend;
pub mod digest;
pub mod mac;
pub mod metrics;
pub mod oracle;
pub mod prompts;
pub mod rng;
pub mod strategy;
pub mod tcp;

/// Identifier of a simulated node or flow. Ids are stable across population
/// segments.
pub type NodeId = u32;
