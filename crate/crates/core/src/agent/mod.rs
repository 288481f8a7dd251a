//! The agent loop.
//!
//! Offline, the strategy agent turns simulated demonstrations into a first
//! strategy, evaluates it on labelled scenarios and refines it by reflection
//! until it reaches its target or runs out of rounds; every new strategy goes
//! through the strategy set's conflict check. Online, at each query period
//! the observer summarizes the recent window, the node agent picks a strategy
//! from memory and the programming assistant interprets it into an action.
//! Episodic memory is frozen for the online stage.

mod config;
mod controller;
mod demos;
mod evaluate;
mod memory;
mod observer;
mod offline;
mod online;
mod scenarios;
mod trace;

pub use config::{AgentConfig, TcpAgentConfig};
pub use controller::{
    run_mac, run_tcp, Decider, Decision, DecisionInput, FixedDecider, MacRun, NodeAgentDecider, PeriodRecord,
    RunOptions, TcpRun,
};
pub use demos::generate_demos;
pub use evaluate::{evaluate_strategy, evaluate_suite, evaluation_scenarios, EvalScenario, Evaluation};
pub use memory::{
    EpisodeRecord, EpisodicMemory, HistoryEvent, PeriodSummary, RemovalReason, StrategySet, TrajectoryMemory,
};
pub use observer::{
    estimate_contention, is_converged, last_change, observed_utilization, observer_analyze, since_change_window,
    tcp_membership_changes, tcp_observe, tcp_observer_analyze, ContentionEstimate, NotableSlot, ObserverReport,
    ObserverThresholds, OutcomeRates, SlotKind, TcpObservation, Window,
};
pub use offline::{
    asi_materialize, family_space, gen_context, generate_initial_strategy, psa_update, reflect_and_refine, run_offline,
    Materialized, OfflineOutcome, PsaOutcome, RefinementRound,
};
pub use online::{online_decide, run_online_mac, run_online_tcp};
pub use scenarios::{mac_label_scenario, standard_dynamic, tcp_label_scenario, Label, DYNAMIC_DEMO_FRAMES};
pub use trace::{export_decision_trace, Actor, DecisionTrace, TraceNode};

use thiserror::Error;

use crate::backend::BackendError;
use crate::mac::MacError;
use crate::metrics::MetricsError;
use crate::oracle::OracleError;
use crate::strategy::{Diagnostic, Domain};
use crate::tcp::TcpError;

/// Which simulator a strategy or demonstration set belongs to.
pub type Family = Domain;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("strategy already meets its target (J = {j:.4}, target {j_opt:.4}); refinement not needed")]
    TargetAlreadyMet { j: f64, j_opt: f64 },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no valid strategy after {} attempts", bundles.len())]
    MaterializationExhausted { bundles: Vec<Vec<Diagnostic>> },
    #[error("observer window too short: {have} frames available, {need} required")]
    WindowTooShort { have: u64, need: u64 },
    #[error("episodic memory is frozen during the online stage")]
    MemoryFrozen,
    #[error("the run was executed without tracing")]
    TracingDisabled,
    #[error("a {strategy:?} strategy cannot run on a {scenario:?} scenario")]
    DomainMismatch { strategy: Domain, scenario: Domain },
    #[error(transparent)]
    Mac(#[from] MacError),
    #[error(transparent)]
    Tcp(#[from] TcpError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}
