//! Fluid per-round simulator of TCP flows sharing one bottleneck.
//!
//! Each step is one round trip. Flows offer their congestion windows; the
//! part of the aggregate above the bandwidth-delay product queues in the
//! bottleneck buffer, and whatever the buffer cannot hold is dropped in
//! proportion to each flow's window. Reno and Vegas reference controllers then
//! update their own windows from the round's feedback; agent flows take their
//! windows from the caller.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::NodeId;

pub const SCHEMA_VERSION: &str = "tcp-v1";

/// Vegas lower threshold in packets.
pub const VEGAS_ALPHA: f64 = 1.0;
/// Vegas upper threshold in packets.
pub const VEGAS_BETA: f64 = 3.0;
/// Penalty added below `-β·r` when a round delivers nothing.
pub const ZERO_ACK_PENALTY: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TcpError {
    #[error("invalid scenario at `{path}`: {reason}")]
    InvalidSpec { path: String, reason: String },
    #[error("could not read scenario: {0}")]
    Parse(String),
    #[error("override for flow {flow} is {cwnd}, outside [1, {c_max}]")]
    OverrideOutOfRange { flow: NodeId, cwnd: u32, c_max: u32 },
    #[error("override targets flow {flow}, which is not a live agent flow")]
    NotAnAgent { flow: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    Reno,
    Vegas,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub controller: Controller,
    #[serde(default)]
    pub join_round: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leave_round: Option<u64>,
}

impl FlowConfig {
    pub fn new(controller: Controller) -> Self {
        FlowConfig { controller, join_round: 0, leave_round: None }
    }

    pub fn joining(mut self, round: u64) -> Self {
        self.join_round = round;
        self
    }

    pub fn leaving(mut self, round: u64) -> Self {
        self.leave_round = Some(round);
        self
    }

    pub fn live_at(&self, round: u64) -> bool {
        round >= self.join_round && self.leave_round.is_none_or(|l| round < l)
    }
}

fn default_schema() -> String {
    SCHEMA_VERSION.to_string()
}
fn default_capacity() -> f64 {
    1.0
}
fn default_packet() -> f64 {
    1000.0
}
fn default_rtt() -> f64 {
    0.1
}
fn default_cmax() -> u32 {
    64
}
fn default_beta() -> f64 {
    0.5
}
fn default_initial_cwnd() -> f64 {
    2.0
}

/// A TCP experiment. Flow ids are positions in `flows`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcpScenarioSpec {
    #[serde(default = "default_schema")]
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub flows: Vec<FlowConfig>,
    /// Bottleneck rate in Mbit/s.
    #[serde(default = "default_capacity")]
    pub capacity_mbps: f64,
    #[serde(default = "default_packet")]
    pub packet_bytes: f64,
    /// Propagation round-trip time in seconds.
    #[serde(default = "default_rtt")]
    pub base_rtt: f64,
    /// Buffer in packets; one bandwidth-delay product when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer: Option<f64>,
    #[serde(default = "default_cmax")]
    pub c_max: u32,
    /// Weight of the RTT term in the reward.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_initial_cwnd")]
    pub initial_cwnd: f64,
    pub total_rounds: u64,
    #[serde(default)]
    pub seed: u64,
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> TcpError {
    TcpError::InvalidSpec { path: path.into(), reason: reason.into() }
}

impl TcpScenarioSpec {
    pub fn new(flows: Vec<FlowConfig>, total_rounds: u64, seed: u64) -> Self {
        TcpScenarioSpec {
            schema: default_schema(),
            name: None,
            flows,
            capacity_mbps: default_capacity(),
            packet_bytes: default_packet(),
            base_rtt: default_rtt(),
            buffer: None,
            c_max: default_cmax(),
            beta: default_beta(),
            initial_cwnd: default_initial_cwnd(),
            total_rounds,
            seed,
        }
    }

    pub fn from_controllers(controllers: &[Controller], total_rounds: u64, seed: u64) -> Self {
        Self::new(controllers.iter().map(|&c| FlowConfig::new(c)).collect(), total_rounds, seed)
    }

    pub fn from_json(text: &str) -> Result<Self, TcpError> {
        let spec: TcpScenarioSpec =
            serde_json::from_str(text).map_err(|e| TcpError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Bottleneck rate in packets per second.
    pub fn capacity_pps(&self) -> f64 {
        self.capacity_mbps * 1e6 / (8.0 * self.packet_bytes)
    }

    /// Bandwidth-delay product in packets.
    pub fn pipe(&self) -> f64 {
        self.capacity_pps() * self.base_rtt
    }

    pub fn buffer_packets(&self) -> f64 {
        self.buffer.unwrap_or_else(|| self.pipe())
    }

    pub fn validate(&self) -> Result<(), TcpError> {
        if self.schema != SCHEMA_VERSION {
            return Err(invalid("schema", format!("expected \"{SCHEMA_VERSION}\"")));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.capacity_mbps) {
            return Err(invalid("capacity_mbps", "must be positive"));
        }
        if !positive(self.packet_bytes) {
            return Err(invalid("packet_bytes", "must be positive"));
        }
        if !positive(self.base_rtt) {
            return Err(invalid("base_rtt", "must be positive"));
        }
        if let Some(b) = self.buffer {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(invalid("buffer", "must be non-negative"));
            }
        }
        if self.c_max < 1 {
            return Err(invalid("c_max", "must be at least 1"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta", "must be non-negative"));
        }
        if !(self.initial_cwnd >= 1.0 && self.initial_cwnd <= self.c_max as f64) {
            return Err(invalid("initial_cwnd", "must lie in [1, c_max]"));
        }
        if self.total_rounds == 0 {
            return Err(invalid("total_rounds", "must be at least 1"));
        }
        if self.flows.is_empty() {
            return Err(invalid("flows", "at least one flow is required"));
        }
        for (i, f) in self.flows.iter().enumerate() {
            if let Some(l) = f.leave_round {
                if l <= f.join_round {
                    return Err(invalid(format!("flows[{i}].leave_round"), "must be after join_round"));
                }
            }
        }
        Ok(())
    }

    pub fn live_at(&self, round: u64) -> Vec<NodeId> {
        (0..self.flows.len())
            .filter(|&i| self.flows[i].live_at(round))
            .map(|i| i as NodeId)
            .collect()
    }

    pub fn agent_ids(&self) -> Vec<NodeId> {
        (0..self.flows.len())
            .filter(|&i| self.flows[i].controller == Controller::Agent)
            .map(|i| i as NodeId)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    SlowStart,
    CongestionAvoidance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub cwnd: f64,
    pub ssthresh: f64,
    /// Minimum RTT seen so far; infinite before the first round.
    pub base_rtt_est: f64,
    pub mode: Mode,
}

impl FlowState {
    pub fn new(cwnd: f64, ssthresh: f64) -> Self {
        FlowState { cwnd, ssthresh, base_rtt_est: f64::INFINITY, mode: Mode::SlowStart }
    }
}

/// What a flow observes at the end of a round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundFeedback {
    /// Window the flow used this round.
    pub cwnd: f64,
    pub acks: f64,
    pub drops: f64,
    pub rtt: f64,
    pub loss: bool,
}

impl RoundFeedback {
    /// Delivery rate in packets per second.
    pub fn throughput(&self) -> f64 {
        self.acks / self.rtt
    }
}

/// Reno: doubling slow start, additive increase, halving on loss.
pub fn reno_update(state: &FlowState, fb: &RoundFeedback, c_max: f64) -> FlowState {
    let mut s = state.clone();
    if fb.loss {
        s.ssthresh = (s.cwnd / 2.0).max(2.0);
        s.cwnd = s.ssthresh;
        s.mode = Mode::CongestionAvoidance;
    } else if s.mode == Mode::SlowStart && s.cwnd < s.ssthresh {
        s.cwnd *= 2.0;
        if s.cwnd >= s.ssthresh {
            s.mode = Mode::CongestionAvoidance;
        }
    } else {
        s.mode = Mode::CongestionAvoidance;
        s.cwnd += 1.0;
    }
    s.cwnd = s.cwnd.clamp(1.0, c_max);
    s
}

/// Vegas: compares expected and actual rate and nudges the window by one.
pub fn vegas_update(state: &FlowState, fb: &RoundFeedback, c_max: f64) -> FlowState {
    let mut s = state.clone();
    s.base_rtt_est = s.base_rtt_est.min(fb.rtt);
    let diff = (s.cwnd / s.base_rtt_est - s.cwnd / fb.rtt) * s.base_rtt_est;
    if diff < VEGAS_ALPHA {
        s.cwnd += 1.0;
    } else if diff > VEGAS_BETA {
        s.cwnd -= 1.0;
    }
    s.mode = Mode::CongestionAvoidance;
    s.cwnd = s.cwnd.clamp(1.0, c_max);
    s
}

/// `ln(a) - β·r`. The log term is floored at `ln(1) - 5` so that a round
/// delivering nothing yields a finite reward.
pub fn tcp_reward(acks: f64, rtt: f64, beta: f64) -> f64 {
    let log_term = if acks > 0.0 { acks.ln().max(-ZERO_ACK_PENALTY) } else { -ZERO_ACK_PENALTY };
    log_term - beta * rtt
}

/// One round of the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundEntry {
    pub round: u64,
    pub queue: f64,
    pub flows: BTreeMap<NodeId, RoundFeedback>,
}

#[derive(Debug, Clone)]
struct FlowRuntime {
    controller: Controller,
    state: FlowState,
    live: bool,
}

/// A running TCP simulation.
#[derive(Debug, Clone)]
pub struct TcpEnvironment {
    spec: TcpScenarioSpec,
    flows: Vec<FlowRuntime>,
    round: u64,
    log: Vec<RoundEntry>,
}

impl TcpEnvironment {
    pub fn build(spec: &TcpScenarioSpec) -> Result<Self, TcpError> {
        spec.validate()?;
        let flows = spec
            .flows
            .iter()
            .map(|f| FlowRuntime {
                controller: f.controller,
                state: FlowState::new(spec.initial_cwnd, spec.c_max as f64),
                live: false,
            })
            .collect();
        Ok(TcpEnvironment { spec: spec.clone(), flows, round: 0, log: Vec::new() })
    }

    pub fn spec(&self) -> &TcpScenarioSpec {
        &self.spec
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn log(&self) -> &[RoundEntry] {
        &self.log
    }

    pub fn flow_state(&self, id: NodeId) -> Option<&FlowState> {
        self.flows.get(id as usize).map(|f| &f.state)
    }

    /// Live flows at the start of the next round.
    pub fn live(&self) -> Vec<NodeId> {
        self.spec.live_at(self.round)
    }

    pub fn live_agents(&self) -> Vec<NodeId> {
        self.live()
            .into_iter()
            .filter(|&id| self.flows[id as usize].controller == Controller::Agent)
            .collect()
    }

    /// Simulates one round. Agent flows without an override keep their
    /// previous window.
    pub fn step_round(
        &mut self,
        overrides: &BTreeMap<NodeId, u32>,
    ) -> Result<BTreeMap<NodeId, RoundFeedback>, TcpError> {
        let live = self.live();
        for (&flow, &cwnd) in overrides {
            let is_agent = live.contains(&flow)
                && self.flows[flow as usize].controller == Controller::Agent;
            if !is_agent {
                return Err(TcpError::NotAnAgent { flow });
            }
            if cwnd < 1 || cwnd > self.spec.c_max {
                return Err(TcpError::OverrideOutOfRange { flow, cwnd, c_max: self.spec.c_max });
            }
        }
        for (i, f) in self.flows.iter_mut().enumerate() {
            let now_live = live.contains(&(i as NodeId));
            if now_live && !f.live {
                f.state = FlowState::new(self.spec.initial_cwnd, self.spec.c_max as f64);
            }
            f.live = now_live;
        }
        for (&flow, &cwnd) in overrides {
            self.flows[flow as usize].state.cwnd = cwnd as f64;
        }

        let cap = self.spec.capacity_pps();
        let pipe = self.spec.pipe();
        let buffer = self.spec.buffer_packets();
        let offered: f64 = live.iter().map(|&i| self.flows[i as usize].state.cwnd).sum();
        let excess = (offered - pipe).max(0.0);
        let queue = excess.min(buffer);
        let overflow = excess - queue;
        let rtt = self.spec.base_rtt + queue / cap;

        let mut feedback = BTreeMap::new();
        let c_max = self.spec.c_max as f64;
        for &id in &live {
            let f = &mut self.flows[id as usize];
            let cwnd = f.state.cwnd;
            let drops = if offered > 0.0 { overflow * cwnd / offered } else { 0.0 };
            let fb = RoundFeedback { cwnd, acks: cwnd - drops, drops, rtt, loss: drops > 0.0 };
            f.state = match f.controller {
                Controller::Reno => reno_update(&f.state, &fb, c_max),
                Controller::Vegas => vegas_update(&f.state, &fb, c_max),
                Controller::Agent => {
                    let mut s = f.state.clone();
                    s.base_rtt_est = s.base_rtt_est.min(rtt);
                    s
                }
            };
            feedback.insert(id, fb);
        }
        self.log.push(RoundEntry { round: self.round, queue, flows: feedback.clone() });
        self.round += 1;
        Ok(feedback)
    }
}

/// Mean per-flow throughput (packets per second) over rounds `[from, to)`,
/// averaged over the rounds in which each flow was live.
pub fn mean_throughputs(log: &[RoundEntry], from: u64, to: u64) -> BTreeMap<NodeId, f64> {
    let mut acc: BTreeMap<NodeId, (f64, u64)> = BTreeMap::new();
    for e in log.iter().filter(|e| e.round >= from && e.round < to) {
        for (&id, fb) in &e.flows {
            let slot = acc.entry(id).or_insert((0.0, 0));
            slot.0 += fb.throughput();
            slot.1 += 1;
        }
    }
    acc.into_iter().map(|(id, (s, n))| (id, s / n as f64)).collect()
}
