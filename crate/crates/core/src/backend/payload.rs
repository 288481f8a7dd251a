//! JSON payloads embedded in prompt data and item blocks. The prompt
//! builders write them and the scripted backend reads them back, so both
//! sides share these definitions.

use serde::{Deserialize, Serialize};

use crate::strategy::{Domain, PolicyVector, StrategyBody};

/// Generation settings the strategy agent passes along with the demos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenContext {
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_max: Option<u32>,
    /// Utilization at or above which a slot counts as overused.
    pub theta_hi: f64,
    /// Loss-round fraction above which a TCP window counts as lossy.
    pub loss_threshold: f64,
    pub epsilon: f64,
    pub sigma: f64,
}

/// What the agent could observe over one window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    /// Frames (MAC) or rounds (TCP) covered.
    pub span: u32,
    /// Nodes or flows live at the end of the window, the agent included.
    pub live: u32,
    /// Joins and leaves inside the window.
    pub membership_changes: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utilization: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collision_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idle_rate: Option<f64>,
    /// Fraction of rounds in which the agent lost packets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtt_inflation: Option<f64>,
    /// Agent successes per frame (MAC) or packets per second (TCP).
    pub agent_throughput: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoTuple {
    pub state: StateSummary,
    pub action: PolicyVector,
    /// Scenario objective reached with this action.
    pub reward: f64,
    /// The agent's own reward.
    pub agent_reward: f64,
    pub next_state: StateSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSet {
    pub label: String,
    pub domain: Domain,
    pub tuples: Vec<DemoTuple>,
}

impl DemoSet {
    /// Tuple with the highest reward, ties broken by the agent's reward, then
    /// by position.
    pub fn best(&self) -> Option<&DemoTuple> {
        self.tuples.iter().fold(None, |best: Option<&DemoTuple>, t| match best {
            Some(b) if (t.reward, t.agent_reward) <= (b.reward, b.agent_reward) => Some(b),
            _ => Some(t),
        })
    }

    pub fn is_dynamic(&self) -> bool {
        self.tuples.iter().any(|t| t.state.membership_changes > 0 || t.next_state.membership_changes > 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotNote {
    pub slot: usize,
    pub utilization: f64,
}

/// One evaluation episode as shown to the reflection prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub scenario: String,
    pub domain: Domain,
    pub j: f64,
    pub j_opt: f64,
    pub shortfall: f64,
    #[serde(default)]
    pub overused: Vec<SlotNote>,
    /// Other nodes that transmitted without a fixed slot pattern.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_contenders: Option<u32>,
    /// Mean transmission probability used by the agent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_cwnd: Option<f64>,
    /// Mean window of the other flows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub competitor_cwnd: Option<f64>,
}

impl EpisodeSummary {
    pub fn failing(&self) -> bool {
        self.j < self.j_opt
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyEntry {
    pub id: String,
    pub strategy: StrategyBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeCandidate {
    pub label: String,
    pub estimated_j: Option<f64>,
    #[serde(default)]
    pub summary: String,
    pub response: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsoleteReason {
    Redundant,
    Contradicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsoleteFlag {
    pub id: String,
    pub reason: ObsoleteReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsaReply {
    pub obsolete: Vec<ObsoleteFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDecisionReply {
    pub strategy_id: String,
    #[serde(default)]
    pub rationale: String,
}
