use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ActionSpace, Effect, PolicyVector, Strategy, Trigger};
use crate::rng::Rng;

const TOL: f64 = 1e-12;

/// Observed quantities that rule triggers read. Absent signals never fire.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Signals {
    /// Per-slot fraction of frames in which other nodes transmitted.
    pub utilization: Option<Vec<f64>>,
    /// Per-slot number of other nodes contending for the slot.
    pub contenders: Option<Vec<u32>>,
    pub env_changed: bool,
    pub collision_rate: Option<f64>,
    pub rtt_inflation: Option<f64>,
    /// ε-greedy resampling is active (escape from a converged action).
    pub exploring: bool,
    /// Gaussian perturbation is applied. Off during offline evaluation.
    pub perturb: bool,
}

/// Outcome of interpreting a strategy for one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interpretation {
    /// The action to emit.
    pub action: PolicyVector,
    /// The action after rules and clipping, before any exploration.
    pub decided: PolicyVector,
    /// Indices of rules that fired, in order.
    pub fired: Vec<usize>,
    /// Slots forced to zero.
    pub avoided: Vec<usize>,
    /// Whether ε-greedy resampling replaced the action.
    pub resampled: bool,
}

fn matched(trigger: &Trigger, s: &Signals, frame_len: usize) -> Option<Vec<usize>> {
    let scope = |slots: &Option<Vec<usize>>| -> Vec<usize> {
        slots.clone().unwrap_or_else(|| (0..frame_len).collect())
    };
    match trigger {
        Trigger::Always => Some(Vec::new()),
        Trigger::SlotUtilizationAtLeast { threshold, slots } => {
            let util = s.utilization.as_ref()?;
            let hits: Vec<usize> = scope(slots)
                .into_iter()
                .filter(|&k| util.get(k).is_some_and(|&u| u + TOL >= *threshold))
                .collect();
            (!hits.is_empty()).then_some(hits)
        }
        Trigger::SlotUnused { slots } => {
            let util = s.utilization.as_ref()?;
            let hits: Vec<usize> =
                scope(slots).into_iter().filter(|&k| util.get(k).is_some_and(|&u| u <= TOL)).collect();
            (!hits.is_empty()).then_some(hits)
        }
        Trigger::EnvChange => s.env_changed.then(Vec::new),
        Trigger::CollisionRateAtLeast { threshold } => {
            s.collision_rate.filter(|r| r + TOL >= *threshold).map(|_| Vec::new())
        }
        Trigger::RttInflationAtLeast { threshold } => {
            s.rtt_inflation.filter(|r| r + TOL >= *threshold).map(|_| Vec::new())
        }
    }
}

/// Applies the base action, then every fired rule in order (later rules win
/// on the same slot), clips, then perturbs and optionally resamples. Avoided
/// slots are zeroed again after exploration, and clipping is always last.
pub fn interpret_action(s: &Strategy, space: &ActionSpace, signals: &Signals, rng: &mut Rng) -> Interpretation {
    let body = &s.body;
    let frame_len = match space {
        ActionSpace::Mac { frame_len } => *frame_len,
        ActionSpace::Tcp { .. } => 0,
    };
    let mut fired = Vec::new();
    let mut avoided: Vec<usize> = Vec::new();
    let mut reset = false;

    let mut probs: Vec<f64> = body.base_action.probs().map(<[f64]>::to_vec).unwrap_or_default();
    let mut cwnd: i64 = body.base_action.cwnd().unwrap_or(1) as i64;

    for (i, rule) in body.rules.iter().enumerate() {
        let Some(hits) = matched(&rule.when, signals, frame_len) else { continue };
        fired.push(i);
        match &rule.then {
            Effect::SetSlotProb { slot, prob } => {
                if let Some(p) = probs.get_mut(*slot) {
                    *p = *prob;
                }
                avoided.retain(|k| k != slot);
            }
            Effect::ScaleAll { factor } => probs.iter_mut().for_each(|p| *p *= factor),
            Effect::AvoidSlots { slots } => {
                for &k in slots.as_ref().unwrap_or(&hits) {
                    if let Some(p) = probs.get_mut(k) {
                        *p = 0.0;
                        if !avoided.contains(&k) {
                            avoided.push(k);
                        }
                    }
                }
            }
            Effect::ContentionShare => {
                if let Some(n) = &signals.contenders {
                    for (k, p) in probs.iter_mut().enumerate() {
                        if let Some(&c) = n.get(k) {
                            *p = 1.0 / (c as f64 + 1.0);
                        }
                    }
                }
            }
            Effect::AdjustCwnd { delta } => cwnd += *delta as i64,
            Effect::ResetExploration => reset = true,
        }
    }
    avoided.sort_unstable();

    let clip_probs = |p: &mut Vec<f64>| p.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    let c_max = match space {
        ActionSpace::Tcp { c_max } => *c_max as i64,
        ActionSpace::Mac { .. } => 1,
    };
    let decided = match space {
        ActionSpace::Mac { .. } => {
            for &k in &avoided {
                probs[k] = 0.0;
            }
            clip_probs(&mut probs);
            PolicyVector::Probs(probs.clone())
        }
        ActionSpace::Tcp { .. } => {
            cwnd = cwnd.clamp(1, c_max);
            PolicyVector::Cwnd(cwnd as u32)
        }
    };

    let sigma = body.explore.sigma;
    let mut cwnd_f = cwnd as f64;
    if signals.perturb && sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("validated sigma");
        match space {
            ActionSpace::Mac { .. } => probs.iter_mut().for_each(|p| *p += normal.sample(rng)),
            ActionSpace::Tcp { .. } => cwnd_f += normal.sample(rng),
        }
    }
    let mut resampled = false;
    if (signals.exploring || reset) && body.explore.epsilon > 0.0 && rng.random::<f64>() < body.explore.epsilon {
        resampled = true;
        match space {
            ActionSpace::Mac { .. } => probs.iter_mut().for_each(|p| *p = rng.random::<f64>()),
            ActionSpace::Tcp { .. } => cwnd_f = rng.random_range(1..=c_max) as f64,
        }
    }
    let action = match space {
        ActionSpace::Mac { .. } => {
            for &k in &avoided {
                probs[k] = 0.0;
            }
            clip_probs(&mut probs);
            PolicyVector::Probs(probs)
        }
        ActionSpace::Tcp { .. } => PolicyVector::Cwnd((cwnd_f.round() as i64).clamp(1, c_max) as u32),
    };
    Interpretation { action, decided, fired, avoided, resampled }
}
