//! Demonstration sets: sampled actions run on the labelled scenarios.

use std::collections::BTreeMap;

use rand::Rng as _;

use super::observer::{observed_utilization, tcp_observe, OutcomeRates, Window};
use super::scenarios::{mac_label_scenario, tcp_label_scenario, Label};
use super::{AgentConfig, AgentError, Family};
use crate::backend::payload::{DemoSet, DemoTuple, StateSummary};
use crate::mac::{Environment, TrajectoryLog};
use crate::metrics::{alpha_fair_clamped, jain_index, live_throughputs};
use crate::rng::{derive_seed, stream, streams};
use crate::strategy::PolicyVector;
use crate::tcp::{mean_throughputs, tcp_reward, RoundEntry, TcpEnvironment};
use crate::NodeId;

fn label_seed(seed: u64, label_index: usize, k: usize) -> u64 {
    derive_seed(derive_seed(seed, streams::DEMOS), ((label_index as u64) << 20) | k as u64)
}

pub(crate) fn mac_state(log: &TrajectoryLog, agent: NodeId, w: Window) -> StateSummary {
    let slots = log.frame_range(w.start, w.end);
    let rates = OutcomeRates::of(slots);
    let live = slots.last().map_or(0, |e| log.live_for(e).len()) as u32;
    let changes = log.segments.iter().skip(1).filter(|s| s.start_frame > w.start && s.start_frame < w.end).count();
    let wins = slots.iter().filter(|e| e.winner() == Some(agent)).count();
    StateSummary {
        span: w.len() as u32,
        live,
        membership_changes: changes as u32,
        utilization: Some(observed_utilization(log, agent, w).into_iter().map(round3).collect()),
        success_rate: Some(round3(rates.success)),
        collision_rate: Some(round3(rates.collision)),
        idle_rate: Some(round3(rates.idle)),
        agent_throughput: round3(wins as f64 / w.len().max(1) as f64),
        ..Default::default()
    }
}

pub(crate) fn tcp_state(log: &[RoundEntry], agent: NodeId, w: Window) -> StateSummary {
    let obs = tcp_observe(log, agent, w);
    let changes = super::observer::tcp_membership_changes(log, w.end).iter().filter(|&&r| r > w.start).count();
    StateSummary {
        span: w.len() as u32,
        live: obs.as_ref().map_or(0, |o| o.live),
        membership_changes: changes as u32,
        loss_rate: obs.as_ref().map(|o| round3(o.loss_rate)),
        rtt_inflation: obs.as_ref().map(|o| round3(o.rtt_inflation)),
        agent_throughput: obs.as_ref().map_or(0.0, |o| round3(o.throughput)),
        ..Default::default()
    }
}

fn round3(x: f64) -> f64 {
    (x * 1e3).round() / 1e3
}

/// α-fair objective over the live nodes' throughputs in frames `[from, to)`.
pub(crate) fn mac_objective(log: &TrajectoryLog, from: u64, to: u64, alpha: f64) -> f64 {
    let xs: Vec<f64> = live_throughputs(log, from, to).into_iter().map(|(_, x)| x).collect();
    alpha_fair_clamped(&xs, alpha)
}

/// Jain index over the flows' mean throughputs in rounds `[from, to)`.
pub(crate) fn tcp_objective(log: &[RoundEntry], from: u64, to: u64) -> f64 {
    let xs: Vec<f64> = mean_throughputs(log, from, to).into_values().collect();
    jain_index(&xs).unwrap_or(0.0)
}

fn mac_demo(label: Label, level: f64, frames: u64, seed: u64, alpha: f64) -> Result<DemoTuple, AgentError> {
    let spec = mac_label_scenario(label, frames, seed);
    let agent = *spec.agent_ids().last().expect("label scenarios have an agent");
    let frames = spec.total_frames;
    let mut env = Environment::build(&spec)?;
    let probs = BTreeMap::from([(agent, level)]);
    env.run_frames(frames, |_| probs.clone())?;
    let log = env.into_log();
    let half = frames / 2;
    let wins = log.frame_range(half, frames).iter().filter(|e| e.winner() == Some(agent)).count();
    Ok(DemoTuple {
        state: mac_state(&log, agent, Window { start: 0, end: half }),
        action: PolicyVector::Probs(vec![level; spec.frame_len]),
        reward: mac_objective(&log, half, frames, alpha),
        agent_reward: wins as f64 / ((frames - half) * spec.frame_len as u64) as f64,
        next_state: mac_state(&log, agent, Window { start: half, end: frames }),
    })
}

fn tcp_demo(label: Label, cwnd: u32, rounds: u64, seed: u64) -> Result<DemoTuple, AgentError> {
    let spec = tcp_label_scenario(label, rounds, seed);
    let agent = *spec.agent_ids().last().expect("label scenarios have an agent");
    let mut env = TcpEnvironment::build(&spec)?;
    let overrides = BTreeMap::from([(agent, cwnd)]);
    for _ in 0..rounds {
        env.step_round(&overrides)?;
    }
    let log = env.log();
    let half = rounds / 2;
    let rewards: Vec<f64> = log
        .iter()
        .filter(|e| e.round >= half)
        .filter_map(|e| e.flows.get(&agent).map(|fb| tcp_reward(fb.acks, fb.rtt, spec.beta)))
        .collect();
    Ok(DemoTuple {
        state: tcp_state(log, agent, Window { start: 0, end: half }),
        action: PolicyVector::Cwnd(cwnd),
        reward: tcp_objective(log, half, rounds),
        agent_reward: rewards.iter().sum::<f64>() / rewards.len().max(1) as f64,
        next_state: tcp_state(log, agent, Window { start: half, end: rounds }),
    })
}

/// Builds one demonstration set per label of `family`, each holding `k`
/// tuples. MAC actions are uniform transmission levels applied to every
/// slot; TCP actions are uniform windows in `[1, c_max]`.
pub fn generate_demos(family: Family, k: usize, seed: u64, cfg: &AgentConfig) -> Result<Vec<DemoSet>, AgentError> {
    if k == 0 {
        return Err(AgentError::Precondition("at least one demonstration per set is required".into()));
    }
    let labels: &[Label] = match family {
        Family::Mac => &Label::MAC,
        Family::Tcp => &Label::TCP,
    };
    let mut sets = Vec::with_capacity(labels.len());
    for (li, &label) in labels.iter().enumerate() {
        let mut rng = stream(derive_seed(seed, streams::DEMOS), li as u64);
        let mut tuples = Vec::with_capacity(k);
        for i in 0..k {
            let s = label_seed(seed, li, i);
            let t = match family {
                Family::Mac => {
                    let level = (rng.random::<f64>() * 1e3).round() / 1e3;
                    mac_demo(label, level, cfg.demo_frames, s, cfg.alpha)?
                }
                Family::Tcp => {
                    let c_max = tcp_label_scenario(label, 1, 0).c_max;
                    let cwnd = rng.random_range(1..=c_max);
                    tcp_demo(label, cwnd, cfg.tcp.demo_rounds, s)?
                }
            };
            tuples.push(t);
        }
        sets.push(DemoSet { label: label.name().to_string(), domain: family, tuples });
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> AgentConfig {
        AgentConfig { demo_frames: 40, tcp: super::super::TcpAgentConfig { demo_rounds: 40, ..Default::default() }, ..Default::default() }
    }

    #[test]
    fn families_have_fixed_labels() {
        let mac = generate_demos(Family::Mac, 2, 1, &small()).unwrap();
        let labels: Vec<&str> = mac.iter().map(|s| s.label.as_str()).collect();
        assert_eq!(labels, ["CSMA", "TDMA", "ALOHA", "DYNAMIC"]);
        assert!(mac.iter().all(|s| s.tuples.len() == 2));
        assert!(mac[3].is_dynamic());
        let tcp = generate_demos(Family::Tcp, 1, 1, &small()).unwrap();
        let labels: Vec<&str> = tcp.iter().map(|s| s.label.as_str()).collect();
        assert_eq!(labels, ["RENO", "VEGAS", "TCP-DYNAMIC"]);
        assert!(tcp.iter().all(|s| s.tuples.len() == 1));
    }

    #[test]
    fn demos_are_deterministic_per_seed() {
        assert_eq!(generate_demos(Family::Mac, 2, 5, &small()).unwrap(), generate_demos(Family::Mac, 2, 5, &small()).unwrap());
        assert_ne!(generate_demos(Family::Mac, 2, 5, &small()).unwrap(), generate_demos(Family::Mac, 2, 6, &small()).unwrap());
    }

    #[test]
    fn zero_samples_is_rejected() {
        assert!(matches!(generate_demos(Family::Mac, 0, 0, &small()), Err(AgentError::Precondition(_))));
    }
}
