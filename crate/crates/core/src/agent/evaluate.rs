//! Offline evaluation of a strategy: J is the objective over the last half
//! of each episode, averaged over episodes, with perturbation off.

use serde::{Deserialize, Serialize};

use super::controller::{run_mac, run_tcp, FixedDecider, RunOptions};
use super::demos::{mac_objective, tcp_objective};
use super::observer::{estimate_contention, observed_utilization, tcp_observe, Window};
use super::scenarios::{mac_label_scenario, tcp_label_scenario, Label};
use super::{AgentConfig, AgentError, Family};
use crate::backend::payload::{EpisodeSummary, SlotNote};
use crate::mac::ScenarioSpec;
use crate::oracle::{solve_aware, Population};
use crate::rng::{derive_seed, streams};
use crate::strategy::{Domain, Strategy};
use crate::tcp::TcpScenarioSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "domain", content = "scenario", rename_all = "snake_case")]
pub enum EvalScenario {
    Mac(ScenarioSpec),
    Tcp(TcpScenarioSpec),
}

impl EvalScenario {
    pub fn domain(&self) -> Domain {
        match self {
            EvalScenario::Mac(_) => Domain::Mac,
            EvalScenario::Tcp(_) => Domain::Tcp,
        }
    }

    pub fn name(&self) -> String {
        match self {
            EvalScenario::Mac(s) => s.name.clone().unwrap_or_else(|| "mac".into()),
            EvalScenario::Tcp(s) => s.name.clone().unwrap_or_else(|| "tcp".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub j: f64,
    pub summary: EpisodeSummary,
}

/// Oracle objective of a single-segment ALOHA/TDMA scenario.
fn oracle_objective(spec: &ScenarioSpec, alpha: f64) -> Option<f64> {
    let segments = spec.segments();
    let [(_, _, live)] = segments.as_slice() else { return None };
    let (pop, _) = Population::from_scenario(spec, live).ok()?;
    solve_aware(&pop, alpha).ok().map(|p| p.objective)
}

fn mac_target(spec: &ScenarioSpec, cfg: &AgentConfig) -> f64 {
    match oracle_objective(spec, cfg.alpha) {
        Some(j) => cfg.target_for(j),
        None => cfg.absolute_target.unwrap_or(f64::NEG_INFINITY),
    }
}

/// Runs `s` on `scenario` for `episodes` episodes. Each episode reseeds the
/// scenario from the evaluation stream of `seed`.
pub fn evaluate_strategy(
    s: &Strategy,
    scenario: &EvalScenario,
    episodes: u32,
    cfg: &AgentConfig,
    seed: u64,
) -> Result<Evaluation, AgentError> {
    if s.domain() != scenario.domain() {
        return Err(AgentError::DomainMismatch { strategy: s.domain(), scenario: scenario.domain() });
    }
    if episodes == 0 {
        return Err(AgentError::Precondition("at least one evaluation episode is required".into()));
    }
    let base = derive_seed(seed, streams::EVALUATION);
    let mut total = 0.0;
    let mut summary = None;
    for e in 0..episodes {
        let ep_seed = derive_seed(base, e as u64);
        let opts = RunOptions { perturb: false, tracing: false, seed: ep_seed };
        let (j, sum) = match scenario {
            EvalScenario::Mac(spec) => {
                let mut spec = spec.clone();
                spec.seed = ep_seed;
                let run = run_mac(&spec, &mut FixedDecider(s.clone()), cfg, &opts)?;
                let n = spec.total_frames;
                let j = mac_objective(&run.log, n / 2, n, cfg.alpha);
                let j_opt = mac_target(&spec, cfg);
                let agent = *spec.agent_ids().first().ok_or_else(|| AgentError::Precondition("scenario has no agent node".into()))?;
                let w = Window { start: n.saturating_sub(cfg.window_frames), end: n };
                let overused = observed_utilization(&run.log, agent, w)
                    .into_iter()
                    .enumerate()
                    .filter(|(_, u)| u + 1e-12 >= cfg.theta_hi)
                    .map(|(slot, utilization)| SlotNote { slot, utilization })
                    .collect();
                let contention = estimate_contention(&run.log, agent, w, cfg.theta_hi);
                let levels: Vec<f64> = run
                    .periods
                    .iter()
                    .filter(|p| p.start >= n / 2)
                    .filter_map(|p| p.decision.action.probs().map(|v| v.iter().sum::<f64>() / v.len() as f64))
                    .collect();
                let sum = EpisodeSummary {
                    scenario: scenario.name(),
                    domain: Domain::Mac,
                    j,
                    j_opt,
                    shortfall: (j_opt - j).max(0.0),
                    overused,
                    random_contenders: Some(contention.random),
                    agent_level: Some(levels.iter().sum::<f64>() / levels.len().max(1) as f64),
                    loss_rate: None,
                    agent_cwnd: None,
                    competitor_cwnd: None,
                };
                (j, sum)
            }
            EvalScenario::Tcp(spec) => {
                let mut spec = spec.clone();
                spec.seed = ep_seed;
                let run = run_tcp(&spec, &mut FixedDecider(s.clone()), cfg, &opts)?;
                let n = spec.total_rounds;
                let j = tcp_objective(&run.log, n / 2, n);
                let j_opt = cfg.tcp_target_jain;
                let agent = *spec.agent_ids().first().ok_or_else(|| AgentError::Precondition("scenario has no agent flow".into()))?;
                let obs = tcp_observe(&run.log, agent, Window { start: n / 2, end: n });
                let (mut own, mut other, mut n_own, mut n_other) = (0.0, 0.0, 0u64, 0u64);
                for e in run.log.iter().filter(|e| e.round >= n / 2) {
                    for (&id, fb) in &e.flows {
                        if id == agent {
                            own += fb.cwnd;
                            n_own += 1;
                        } else {
                            other += fb.cwnd;
                            n_other += 1;
                        }
                    }
                }
                let sum = EpisodeSummary {
                    scenario: scenario.name(),
                    domain: Domain::Tcp,
                    j,
                    j_opt,
                    shortfall: (j_opt - j).max(0.0),
                    overused: Vec::new(),
                    random_contenders: None,
                    agent_level: None,
                    loss_rate: obs.map(|o| o.loss_rate),
                    agent_cwnd: (n_own > 0).then(|| own / n_own as f64),
                    competitor_cwnd: (n_other > 0).then(|| other / n_other as f64),
                };
                (j, sum)
            }
        };
        total += j;
        summary = Some(sum);
    }
    let j = total / episodes as f64;
    let mut summary = summary.expect("at least one episode");
    summary.j = j;
    summary.shortfall = (summary.j_opt - j).max(0.0);
    Ok(Evaluation { j, summary })
}

/// The scenarios a family's strategies are scored on offline.
pub fn evaluation_scenarios(family: Family, cfg: &AgentConfig) -> Vec<EvalScenario> {
    match family {
        Family::Mac => Label::MAC_EVAL.iter().map(|&l| EvalScenario::Mac(mac_label_scenario(l, cfg.eval_frames, 0))).collect(),
        Family::Tcp => {
            Label::TCP_EVAL.iter().map(|&l| EvalScenario::Tcp(tcp_label_scenario(l, cfg.tcp.eval_rounds, 0))).collect()
        }
    }
}

/// Evaluates `s` on every scenario of its family; scenario `i` uses seed
/// stream `i` so the scenarios are independent.
pub fn evaluate_suite(s: &Strategy, cfg: &AgentConfig, seed: u64) -> Result<Vec<Evaluation>, AgentError> {
    evaluation_scenarios(s.domain(), cfg)
        .iter()
        .enumerate()
        .map(|(i, sc)| evaluate_strategy(s, sc, cfg.eval_episodes, cfg, derive_seed(seed, i as u64)))
        .collect()
}
