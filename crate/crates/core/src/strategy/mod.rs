//! The strategy language.
//!
//! A strategy is a JSON document (schema `strategy-v1`) holding a base
//! action, an ordered list of trigger/effect rules and exploration settings.
//! It is the only executable artifact the agents produce: the backend writes
//! strategy text, [`parse_strategy`] and [`validate_strategy`] act as the
//! compile check, and [`interpret_action`] turns a strategy plus observed
//! signals into the action for the next query period.
//!
//! ```json
//! {
//!   "schema": "strategy-v1",
//!   "domain": "mac",
//!   "base_action": {"probs": [0.3,0.3,0.3,0.3,0.3,0.3,0.3,0.3,0.3,0.3]},
//!   "rules": [
//!     {"when": {"kind": "always"}, "then": {"kind": "contention_share"}},
//!     {"when": {"kind": "slot_utilization_at_least", "threshold": 0.9},
//!      "then": {"kind": "avoid_slots"}}
//!   ],
//!   "explore": {"epsilon": 0.02, "sigma": 0.05},
//!   "provenance": "generated"
//! }
//! ```

mod interpret;
mod text;
mod validate;

pub use interpret::{interpret_action, Interpretation, Signals};
pub use text::{parse_strategy, serialize_strategy, Diagnostic, DiagnosticKind};
pub use validate::{validate_strategy, ActionSpace};

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;

pub const SCHEMA_VERSION: &str = "strategy-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Mac,
    Tcp,
}

/// Per-slot transmission probabilities (MAC) or a congestion window (TCP).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyVector {
    Probs(Vec<f64>),
    Cwnd(u32),
}

impl PolicyVector {
    pub fn domain(&self) -> Domain {
        match self {
            PolicyVector::Probs(_) => Domain::Mac,
            PolicyVector::Cwnd(_) => Domain::Tcp,
        }
    }

    pub fn probs(&self) -> Option<&[f64]> {
        match self {
            PolicyVector::Probs(p) => Some(p),
            PolicyVector::Cwnd(_) => None,
        }
    }

    pub fn cwnd(&self) -> Option<u32> {
        match self {
            PolicyVector::Cwnd(c) => Some(*c),
            PolicyVector::Probs(_) => None,
        }
    }

    /// L∞ distance; infinite across domains or lengths.
    pub fn linf(&self, other: &PolicyVector) -> f64 {
        match (self, other) {
            (PolicyVector::Probs(a), PolicyVector::Probs(b)) if a.len() == b.len() => {
                a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
            }
            (PolicyVector::Cwnd(a), PolicyVector::Cwnd(b)) => (*a as f64 - *b as f64).abs(),
            _ => f64::INFINITY,
        }
    }

    /// Compact rendering for prompts and traces.
    pub fn render(&self) -> String {
        match self {
            PolicyVector::Probs(p) => {
                let parts: Vec<String> = p.iter().map(|v| format!("{v:.2}")).collect();
                format!("[{}]", parts.join(" "))
            }
            PolicyVector::Cwnd(c) => format!("cwnd {c}"),
        }
    }
}

/// Condition under which a rule fires.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Trigger {
    /// Fires every period.
    Always,
    /// Some slot in scope (all slots when `slots` is absent) is used by other
    /// nodes in at least `threshold` of the observed frames. Matches those slots.
    SlotUtilizationAtLeast {
        threshold: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        slots: Option<Vec<usize>>,
    },
    /// Some slot in scope is never used by other nodes. Matches those slots.
    SlotUnused {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        slots: Option<Vec<usize>>,
    },
    /// The observer reports a change in the environment.
    EnvChange,
    /// Fraction of own transmissions that collided (MAC) or of rounds with
    /// loss (TCP) is at least `threshold`.
    CollisionRateAtLeast { threshold: f64 },
    /// Mean RTT over minimum RTT, minus one, is at least `threshold`.
    RttInflationAtLeast { threshold: f64 },
}

impl Trigger {
    pub fn name(&self) -> &'static str {
        match self {
            Trigger::Always => "always",
            Trigger::SlotUtilizationAtLeast { .. } => "slot_utilization_at_least",
            Trigger::SlotUnused { .. } => "slot_unused",
            Trigger::EnvChange => "env_change",
            Trigger::CollisionRateAtLeast { .. } => "collision_rate_at_least",
            Trigger::RttInflationAtLeast { .. } => "rtt_inflation_at_least",
        }
    }
}

/// What a fired rule does to the action under construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Effect {
    SetSlotProb { slot: usize, prob: f64 },
    ScaleAll { factor: f64 },
    /// Forces the listed slots (the trigger's matched slots when absent) to
    /// zero, including after perturbation.
    AvoidSlots {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        slots: Option<Vec<usize>>,
    },
    /// Sets each slot to `1 / (n + 1)` where `n` is the number of other nodes
    /// observed contending for it.
    ContentionShare,
    AdjustCwnd { delta: i32 },
    /// Enables ε-greedy resampling for this period.
    ResetExploration,
}

impl Effect {
    pub fn name(&self) -> &'static str {
        match self {
            Effect::SetSlotProb { .. } => "set_slot_prob",
            Effect::ScaleAll { .. } => "scale_all",
            Effect::AvoidSlots { .. } => "avoid_slots",
            Effect::ContentionShare => "contention_share",
            Effect::AdjustCwnd { .. } => "adjust_cwnd",
            Effect::ResetExploration => "reset_exploration",
        }
    }

    /// Whether two effects pull the action in opposite directions.
    pub fn opposes(&self, other: &Effect) -> bool {
        use Effect::*;
        match (self, other) {
            (ScaleAll { factor: a }, ScaleAll { factor: b }) => (a - 1.0) * (b - 1.0) < 0.0,
            (AdjustCwnd { delta: a }, AdjustCwnd { delta: b }) => a.signum() * b.signum() < 0,
            (SetSlotProb { slot: a, prob: pa }, SetSlotProb { slot: b, prob: pb }) => a == b && pa != pb,
            (AvoidSlots { slots: Some(s) }, SetSlotProb { slot, prob })
            | (SetSlotProb { slot, prob }, AvoidSlots { slots: Some(s) }) => *prob > 0.0 && s.contains(slot),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub when: Trigger,
    pub then: Effect,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Explore {
    pub epsilon: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Generated,
    Refined,
    Escape,
}

/// Strategy content. Field order here is the canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyBody {
    pub schema: String,
    pub domain: Domain,
    pub base_action: PolicyVector,
    pub rules: Vec<Rule>,
    pub explore: Explore,
    pub provenance: Provenance,
}

/// A strategy together with its content id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub id: String,
    pub body: StrategyBody,
}

impl Strategy {
    pub fn from_body(body: StrategyBody) -> Self {
        let id = sha256_hex(text::canonical_text(&body).as_bytes());
        Strategy { id, body }
    }

    pub fn new(
        base_action: PolicyVector,
        rules: Vec<Rule>,
        explore: Explore,
        provenance: Provenance,
    ) -> Self {
        Self::from_body(StrategyBody {
            schema: SCHEMA_VERSION.to_string(),
            domain: base_action.domain(),
            base_action,
            rules,
            explore,
            provenance,
        })
    }

    pub fn domain(&self) -> Domain {
        self.body.domain
    }

    pub fn short_id(&self) -> &str {
        &self.id[..12]
    }

    /// The canonical rule list, used to compare strategies by behaviour.
    pub fn rules_text(&self) -> String {
        serde_json::to_string(&self.body.rules).expect("rules serialize")
    }

    /// A copy with different content; the id is recomputed.
    pub fn with_body(&self, f: impl FnOnce(&mut StrategyBody)) -> Strategy {
        let mut body = self.body.clone();
        f(&mut body);
        Strategy::from_body(body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn opposing_effects() {
        assert!(Effect::ScaleAll { factor: 0.5 }.opposes(&Effect::ScaleAll { factor: 2.0 }));
        assert!(!Effect::ScaleAll { factor: 0.5 }.opposes(&Effect::ScaleAll { factor: 0.7 }));
        assert!(Effect::AdjustCwnd { delta: 2 }.opposes(&Effect::AdjustCwnd { delta: -1 }));
        assert!(Effect::AvoidSlots { slots: Some(vec![3]) }.opposes(&Effect::SetSlotProb { slot: 3, prob: 0.4 }));
        assert!(!Effect::ContentionShare.opposes(&Effect::ResetExploration));
    }

    #[test]
    fn linf_distance() {
        let a = PolicyVector::Probs(vec![0.1, 0.5]);
        let b = PolicyVector::Probs(vec![0.2, 0.45]);
        assert!((a.linf(&b) - 0.1).abs() < 1e-12);
        assert_eq!(a.linf(&PolicyVector::Cwnd(3)), f64::INFINITY);
    }
}
