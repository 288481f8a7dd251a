use serde::{Deserialize, Serialize};

use super::text::{Diagnostic, DiagnosticKind};
use super::{Domain, Effect, PolicyVector, Strategy, Trigger};

/// The action space a strategy must fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSpace {
    Mac { frame_len: usize },
    Tcp { c_max: u32 },
}

impl ActionSpace {
    pub fn domain(&self) -> Domain {
        match self {
            ActionSpace::Mac { .. } => Domain::Mac,
            ActionSpace::Tcp { .. } => Domain::Tcp,
        }
    }
}

const MAX_SCALE: f64 = 100.0;

fn is_prob(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

/// Checks ranges, references and domain compatibility. Pure.
pub fn validate_strategy(s: &Strategy, space: &ActionSpace) -> Result<(), Vec<Diagnostic>> {
    let mut out = Vec::new();
    let mut push = |kind, path: String, msg: String| out.push(Diagnostic::at(kind, path, msg));
    let body = &s.body;

    if body.domain != space.domain() {
        push(
            DiagnosticKind::Domain,
            "domain".into(),
            format!("strategy is for {:?} but the environment is {:?}", body.domain, space.domain()),
        );
    }
    if body.base_action.domain() != body.domain {
        push(DiagnosticKind::Domain, "base_action".into(), "base action does not match the domain".into());
    }
    let frame_len = match *space {
        ActionSpace::Mac { frame_len } => frame_len,
        ActionSpace::Tcp { .. } => 0,
    };
    match (&body.base_action, space) {
        (PolicyVector::Probs(p), ActionSpace::Mac { frame_len }) => {
            if p.len() != *frame_len {
                push(
                    DiagnosticKind::Domain,
                    "base_action.probs".into(),
                    format!("{} entries for a frame of {frame_len} slots", p.len()),
                );
            }
            for (k, &v) in p.iter().enumerate() {
                if !is_prob(v) {
                    push(
                        DiagnosticKind::Range,
                        format!("base_action.probs[{k}]"),
                        format!("slot {k} probability {v} is outside [0, 1]"),
                    );
                }
            }
        }
        (PolicyVector::Cwnd(c), ActionSpace::Tcp { c_max })
            if (*c < 1 || c > c_max) => {
                push(DiagnosticKind::Range, "base_action.cwnd".into(), format!("cwnd {c} is outside [1, {c_max}]"));
            }
        _ => {}
    }
    if !is_prob(body.explore.epsilon) {
        push(DiagnosticKind::Range, "explore.epsilon".into(), format!("{} is outside [0, 1]", body.explore.epsilon));
    }
    let sigma_max = match space {
        ActionSpace::Mac { .. } => 1.0,
        ActionSpace::Tcp { c_max } => *c_max as f64,
    };
    if !(0.0..=sigma_max).contains(&body.explore.sigma) {
        push(
            DiagnosticKind::Range,
            "explore.sigma".into(),
            format!("{} is outside [0, {sigma_max}]", body.explore.sigma),
        );
    }

    let is_mac = space.domain() == Domain::Mac;
    for (i, rule) in body.rules.iter().enumerate() {
        let at = |field: &str| format!("rules[{i}].{field}");
        let check_slots = |slots: &Option<Vec<usize>>, field: &str, push: &mut dyn FnMut(DiagnosticKind, String, String)| {
            if let Some(list) = slots {
                if list.is_empty() {
                    push(DiagnosticKind::Range, at(field), "slot list is empty".into());
                }
                for (j, &k) in list.iter().enumerate() {
                    if k >= frame_len {
                        push(
                            DiagnosticKind::DanglingIndex,
                            format!("{}[{j}]", at(field)),
                            format!("slot {k} does not exist in a frame of {frame_len}"),
                        );
                    }
                }
            }
        };
        let slot_trigger = matches!(rule.when, Trigger::SlotUtilizationAtLeast { .. } | Trigger::SlotUnused { .. });
        if slot_trigger && !is_mac {
            push(DiagnosticKind::Domain, at("when"), format!("{} needs a slotted domain", rule.when.name()));
        }
        match &rule.when {
            Trigger::SlotUtilizationAtLeast { threshold, slots } => {
                if !is_prob(*threshold) {
                    push(DiagnosticKind::Range, at("when.threshold"), format!("{threshold} is outside [0, 1]"));
                }
                if is_mac {
                    check_slots(slots, "when.slots", &mut push);
                }
            }
            Trigger::SlotUnused { slots } => {
                if is_mac {
                    check_slots(slots, "when.slots", &mut push);
                }
            }
            Trigger::CollisionRateAtLeast { threshold } => {
                if !is_prob(*threshold) {
                    push(DiagnosticKind::Range, at("when.threshold"), format!("{threshold} is outside [0, 1]"));
                }
            }
            Trigger::RttInflationAtLeast { threshold } => {
                if is_mac {
                    push(DiagnosticKind::Domain, at("when"), "rtt_inflation_at_least needs the TCP domain".into());
                }
                if !(*threshold >= 0.0 && threshold.is_finite()) {
                    push(DiagnosticKind::Range, at("when.threshold"), format!("{threshold} must be non-negative"));
                }
            }
            Trigger::Always | Trigger::EnvChange => {}
        }
        let mac_only = |push: &mut dyn FnMut(DiagnosticKind, String, String)| {
            if !is_mac {
                push(DiagnosticKind::Domain, at("then"), format!("{} needs a slotted domain", rule.then.name()));
            }
        };
        match &rule.then {
            Effect::SetSlotProb { slot, prob } => {
                mac_only(&mut push);
                if is_mac && *slot >= frame_len {
                    push(
                        DiagnosticKind::DanglingIndex,
                        at("then.slot"),
                        format!("slot {slot} does not exist in a frame of {frame_len}"),
                    );
                }
                if !is_prob(*prob) {
                    push(DiagnosticKind::Range, at("then.prob"), format!("{prob} is outside [0, 1]"));
                }
            }
            Effect::ScaleAll { factor } => {
                mac_only(&mut push);
                if !(0.0..=MAX_SCALE).contains(factor) {
                    push(DiagnosticKind::Range, at("then.factor"), format!("{factor} is outside [0, {MAX_SCALE}]"));
                }
            }
            Effect::AvoidSlots { slots } => {
                mac_only(&mut push);
                if is_mac {
                    check_slots(slots, "then.slots", &mut push);
                    if slots.is_none() && !slot_trigger {
                        push(
                            DiagnosticKind::DanglingIndex,
                            at("then.slots"),
                            format!("no slots given and trigger {} matches none", rule.when.name()),
                        );
                    }
                }
            }
            Effect::ContentionShare => mac_only(&mut push),
            Effect::AdjustCwnd { delta } => {
                if is_mac {
                    push(DiagnosticKind::Domain, at("then"), "adjust_cwnd needs the TCP domain".into());
                }
                if let ActionSpace::Tcp { c_max } = space {
                    if delta.unsigned_abs() > *c_max {
                        push(DiagnosticKind::Range, at("then.delta"), format!("|{delta}| exceeds {c_max}"));
                    }
                }
            }
            Effect::ResetExploration => {}
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::{Explore, Provenance, Rule};

    fn mac(probs: Vec<f64>, rules: Vec<Rule>) -> Strategy {
        Strategy::new(PolicyVector::Probs(probs), rules, Explore { epsilon: 0.0, sigma: 0.0 }, Provenance::Generated)
    }

    const SPACE: ActionSpace = ActionSpace::Mac { frame_len: 10 };

    #[test]
    fn range_diagnostic_names_slot() {
        let mut p = vec![0.5; 10];
        p[4] = 1.2;
        let d = validate_strategy(&mac(p, vec![]), &SPACE).unwrap_err();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DiagnosticKind::Range);
        assert_eq!(d[0].path.as_deref(), Some("base_action.probs[4]"));
        assert!(d[0].message.contains("slot 4"));
    }

    #[test]
    fn dangling_slot_index() {
        let rule = Rule { when: Trigger::Always, then: Effect::SetSlotProb { slot: 12, prob: 0.5 } };
        let d = validate_strategy(&mac(vec![0.5; 10], vec![rule]), &SPACE).unwrap_err();
        assert_eq!(d[0].kind, DiagnosticKind::DanglingIndex);
    }

    #[test]
    fn well_formed_is_ok() {
        let rule = Rule {
            when: Trigger::SlotUtilizationAtLeast { threshold: 0.9, slots: None },
            then: Effect::AvoidSlots { slots: None },
        };
        assert_eq!(validate_strategy(&mac(vec![0.5; 10], vec![rule]), &SPACE), Ok(()));
    }

    #[test]
    fn avoid_without_slot_source_is_dangling() {
        let rule = Rule { when: Trigger::EnvChange, then: Effect::AvoidSlots { slots: None } };
        let d = validate_strategy(&mac(vec![0.5; 10], vec![rule]), &SPACE).unwrap_err();
        assert_eq!(d[0].kind, DiagnosticKind::DanglingIndex);
    }

    #[test]
    fn domain_mismatch() {
        let d = validate_strategy(&mac(vec![0.5; 10], vec![]), &ActionSpace::Tcp { c_max: 64 }).unwrap_err();
        assert!(d.iter().any(|d| d.kind == DiagnosticKind::Domain));
        let tcp = Strategy::new(
            PolicyVector::Cwnd(80),
            vec![Rule { when: Trigger::Always, then: Effect::ContentionShare }],
            Explore { epsilon: 0.0, sigma: 0.0 },
            Provenance::Generated,
        );
        let d = validate_strategy(&tcp, &ActionSpace::Tcp { c_max: 64 }).unwrap_err();
        assert!(d.iter().any(|d| d.kind == DiagnosticKind::Range));
        assert!(d.iter().any(|d| d.kind == DiagnosticKind::Domain));
    }
}
