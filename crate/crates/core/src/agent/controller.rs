//! The query-period engine shared by offline evaluation and the online stage.
//!
//! At every period boundary each live agent node gets a fresh decision from
//! a [`Decider`]; in between its action is held constant. AWARE nodes follow
//! the oracle policy of the current population segment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::memory::{PeriodSummary, StrategySet, TrajectoryMemory};
use super::observer::{
    estimate_contention, observed_utilization, observer_analyze, since_change_window, tcp_observe,
    tcp_observer_analyze, ObserverReport, ObserverThresholds, Window,
};
use super::trace::{Actor, DecisionTrace, TraceNode};
use super::{AgentConfig, AgentError};
use crate::backend::payload::StrategyEntry;
use crate::backend::template::{extract_json, item_block};
use crate::backend::{
    ranked_complete, CandidateCheck, CompletionBackend, CompletionRequest, Message, RankerQuery,
    ITEMS_PLACEHOLDER,
};
use crate::backend::payload::NodeDecisionReply;
use crate::mac::{Environment, NodeKind, ScenarioSpec, SlotOutcome, TrajectoryLog};
use crate::oracle::{aware_trajectory, AwareTrajectory};
use crate::prompts;
use crate::rng::{derive_seed, stream, streams, Rng};
use crate::strategy::{interpret_action, ActionSpace, Effect, Interpretation, PolicyVector, Signals, Strategy};
use crate::tcp::{RoundEntry, TcpEnvironment, TcpScenarioSpec};
use crate::NodeId;

/// What a decider sees at a period boundary.
#[derive(Debug, Clone)]
pub struct DecisionInput<'a> {
    pub agent: NodeId,
    pub period: u64,
    /// First frame (MAC) or round (TCP) of the period.
    pub start: u64,
    pub report: Option<&'a ObserverReport>,
    pub signals: &'a Signals,
    pub space: ActionSpace,
    pub previous: Option<&'a PolicyVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy_id: Option<String>,
    pub action: PolicyVector,
    pub decided: PolicyVector,
    /// Effects of the rules that fired, rendered.
    pub effects: Vec<String>,
    pub avoided: Vec<usize>,
    pub resampled: bool,
    /// Whether the node-decision prompt was sent.
    pub queried: bool,
    /// The backend failed and the previous action was reused.
    pub fallback: bool,
    pub ranked: bool,
    pub rationale: String,
}

impl Decision {
    /// Decision produced by interpreting `s`.
    pub fn from_interpretation(s: &Strategy, it: Interpretation) -> Self {
        let effects = it
            .fired
            .iter()
            .map(|&i| render_effect(&s.body.rules[i].then, &it.avoided))
            .collect();
        Decision {
            strategy_id: Some(s.id.clone()),
            action: it.action,
            decided: it.decided,
            effects,
            avoided: it.avoided,
            resampled: it.resampled,
            queried: false,
            fallback: false,
            ranked: false,
            rationale: String::new(),
        }
    }
}

fn slot_list(slots: &[usize]) -> String {
    let v: Vec<String> = slots.iter().map(ToString::to_string).collect();
    v.join(",")
}

fn render_effect(e: &Effect, avoided: &[usize]) -> String {
    match e {
        Effect::SetSlotProb { slot, prob } => format!("set_slot_prob{{{slot}={prob}}}"),
        Effect::ScaleAll { factor } => format!("scale_all{{{factor}}}"),
        Effect::AvoidSlots { slots } => format!("avoid_slots{{{}}}", slot_list(slots.as_deref().unwrap_or(avoided))),
        Effect::ContentionShare => "contention_share".into(),
        Effect::AdjustCwnd { delta } => format!("adjust_cwnd{{{delta:+}}}"),
        Effect::ResetExploration => "reset_exploration".into(),
    }
}

/// Chooses the action for one agent at a period boundary.
pub trait Decider {
    fn decide(&mut self, input: &DecisionInput<'_>, rng: &mut Rng) -> Result<Decision, AgentError>;

    /// Called with a summary of each completed period.
    fn observe(&mut self, _agent: NodeId, _summary: &PeriodSummary) {}
}

/// Runs one strategy without consulting a backend.
#[derive(Debug, Clone)]
pub struct FixedDecider(pub Strategy);

impl Decider for FixedDecider {
    fn decide(&mut self, input: &DecisionInput<'_>, rng: &mut Rng) -> Result<Decision, AgentError> {
        let it = interpret_action(&self.0, &input.space, input.signals, rng);
        Ok(Decision::from_interpretation(&self.0, it))
    }
}

/// The online node agent: asks the backend which strategy from memory to
/// run, then interprets it. Converged periods skip the query and keep the
/// current strategy with exploration enabled.
pub struct NodeAgentDecider<'a> {
    set: &'a StrategySet,
    backend: &'a dyn CompletionBackend,
    judge: &'a dyn CompletionBackend,
    cfg: &'a AgentConfig,
    trajectory: BTreeMap<NodeId, TrajectoryMemory>,
    current: BTreeMap<NodeId, String>,
}

/// Periods of trajectory the node agent keeps in its prompt.
const TRAJECTORY_CAPACITY: usize = 5;

impl<'a> NodeAgentDecider<'a> {
    pub fn new(
        set: &'a StrategySet,
        backend: &'a dyn CompletionBackend,
        judge: &'a dyn CompletionBackend,
        cfg: &'a AgentConfig,
    ) -> Self {
        NodeAgentDecider { set, backend, judge, cfg, trajectory: BTreeMap::new(), current: BTreeMap::new() }
    }

    fn observer_text(&self, report: Option<&ObserverReport>) -> Result<String, AgentError> {
        let Some(r) = report else {
            return Ok("no report yet: the observation window is still filling".into());
        };
        if !self.cfg.observer_via_backend {
            return Ok(r.render());
        }
        let json = serde_json::to_string(r).expect("report serializes");
        let prompt = prompts::fill(prompts::OBSERVER_SUMMARY, &[("report", &json)]);
        let req = CompletionRequest::new("observer", vec![Message::system(prompts::SYSTEM), Message::user(prompt)]);
        Ok(self.backend.complete(&req)?)
    }

    fn query(&self, agent: NodeId, report: Option<&ObserverReport>) -> Result<(String, bool), AgentError> {
        let observer = self.observer_text(report)?;
        let trajectory = self.trajectory.get(&agent).map_or_else(|| "[]".to_string(), TrajectoryMemory::to_json);
        let prompt = prompts::fill(prompts::NODE_DECISION, &[("trajectory", &trajectory), ("observer", &observer)]);
        let items: Vec<String> = self
            .set
            .strategies()
            .iter()
            .map(|s| {
                let entry = StrategyEntry { id: s.id.clone(), strategy: s.body.clone() };
                item_block(s.short_id(), &serde_json::to_string(&entry).expect("entry serializes"))
            })
            .collect();
        let base = CompletionRequest::new("node", vec![Message::system(prompts::SYSTEM), Message::user(prompt)]);
        let q = RankerQuery::new(base, items);
        if self.cfg.ranker_online {
            let set = self.set;
            let check = |r: &str| match serde_json::from_str::<NodeDecisionReply>(extract_json(r)) {
                Ok(reply) if set.contains(&reply.strategy_id) => {
                    CandidateCheck::Valid { estimated_j: None, summary: reply.rationale }
                }
                Ok(reply) => CandidateCheck::Invalid { diagnostics: format!("unknown strategy {}", reply.strategy_id) },
                Err(e) => CandidateCheck::Invalid { diagnostics: e.to_string() },
            };
            return match ranked_complete(&q, self.backend, self.judge, check) {
                Ok(out) => Ok((out.response, true)),
                Err(crate::backend::RankError::Backend(e)) => Err(e.into()),
                Err(crate::backend::RankError::BothUnparseable { candidates, .. }) => {
                    Ok((candidates[0].clone(), true))
                }
            };
        }
        let mut req = q.base.clone();
        for m in &mut req.messages {
            m.content = m.content.replace(ITEMS_PLACEHOLDER, &q.items.join("\n"));
        }
        Ok((self.backend.complete(&req)?, false))
    }
}

impl Decider for NodeAgentDecider<'_> {
    fn decide(&mut self, input: &DecisionInput<'_>, rng: &mut Rng) -> Result<Decision, AgentError> {
        let latest = self
            .set
            .latest()
            .ok_or_else(|| AgentError::Precondition("strategy memory is empty".into()))?;
        let converged = input.report.is_some_and(|r| r.converged);
        let held = self.current.get(&input.agent).and_then(|id| self.set.get(id));
        let (strategy, queried, ranked, rationale) = match held {
            Some(s) if converged => (s, false, false, "action converged; exploring around the current strategy".to_string()),
            _ => match self.query(input.agent, input.report) {
                Ok((reply, ranked)) => match serde_json::from_str::<NodeDecisionReply>(extract_json(&reply)) {
                    Ok(r) => match self.set.get(&r.strategy_id) {
                        Some(s) => (s, true, ranked, r.rationale),
                        None => (latest, true, ranked, format!("reply named unknown strategy {}; using the latest", r.strategy_id)),
                    },
                    Err(e) => (latest, true, ranked, format!("unreadable reply ({e}); using the latest strategy")),
                },
                Err(AgentError::Backend(e)) => {
                    let rationale = format!("backend unavailable ({e}); previous action reused");
                    if let Some(prev) = input.previous {
                        return Ok(Decision {
                            strategy_id: self.current.get(&input.agent).cloned(),
                            action: prev.clone(),
                            decided: prev.clone(),
                            effects: Vec::new(),
                            avoided: Vec::new(),
                            resampled: false,
                            queried: true,
                            fallback: true,
                            ranked: false,
                            rationale,
                        });
                    }
                    let it = interpret_action(latest, &input.space, input.signals, rng);
                    let mut d = Decision::from_interpretation(latest, it);
                    d.queried = true;
                    d.fallback = true;
                    d.rationale = format!("{rationale}; no previous action, latest strategy used");
                    self.current.insert(input.agent, latest.id.clone());
                    return Ok(d);
                }
                Err(e) => return Err(e),
            },
        };
        let mut signals = input.signals.clone();
        signals.exploring |= converged;
        let it = interpret_action(strategy, &input.space, &signals, rng);
        let mut d = Decision::from_interpretation(strategy, it);
        d.queried = queried;
        d.ranked = ranked;
        d.rationale = rationale;
        self.current.insert(input.agent, strategy.id.clone());
        Ok(d)
    }

    fn observe(&mut self, agent: NodeId, summary: &PeriodSummary) {
        self.trajectory.entry(agent).or_insert_with(|| TrajectoryMemory::new(TRAJECTORY_CAPACITY)).push(summary.clone());
    }
}

/// One query period of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub agent: NodeId,
    pub period: u64,
    pub start: u64,
    pub decision: Decision,
    pub env_changed: bool,
    pub converged: bool,
    pub findings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Apply the per-period Gaussian perturbation.
    pub perturb: bool,
    pub tracing: bool,
    /// Seed of the agents' exploration streams.
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct MacRun {
    pub log: TrajectoryLog,
    pub periods: Vec<PeriodRecord>,
    pub trace: Option<DecisionTrace>,
}

#[derive(Debug, Clone)]
pub struct TcpRun {
    pub log: Vec<RoundEntry>,
    pub periods: Vec<PeriodRecord>,
    pub trace: Option<DecisionTrace>,
}

fn agent_rngs(ids: &[NodeId], seed: u64) -> BTreeMap<NodeId, Rng> {
    let base = derive_seed(seed, streams::EXPLORE);
    ids.iter().map(|&id| (id, stream(base, id as u64))).collect()
}

fn period_trace(rec: &PeriodRecord, report_json: &str, signals_json: &str) -> TraceNode {
    let d = &rec.decision;
    let sid = d.strategy_id.as_deref().unwrap_or("none");
    let mut node_label = format!("strategy {}", &sid[..sid.len().min(12)]);
    if !d.effects.is_empty() {
        node_label.push_str(": ");
        node_label.push_str(&d.effects.join(", "));
    }
    if d.fallback {
        node_label.push_str(" (fallback)");
    }
    let action_json = serde_json::to_string(&d.action).expect("action serializes");
    let mut leaf_label = format!("action {}", d.action.render());
    if d.resampled {
        leaf_label.push_str(" (explored)");
    }
    let leaf = TraceNode::new(Actor::Assistant, leaf_label, signals_json, &action_json);
    let decided_json = serde_json::to_string(&d.decided).expect("action serializes");
    let below_node = if d.ranked {
        TraceNode::new(Actor::Ranker, "order-reversal ranking", sid, sid).with_child(leaf)
    } else {
        leaf
    };
    let node = TraceNode::new(Actor::Node, node_label, report_json, &decided_json).with_child(below_node);
    let mut top = if rec.findings.is_empty() {
        node
    } else {
        let text = rec.findings.join("; ");
        TraceNode::new(Actor::Observer, text.clone(), report_json, &text).with_child(node)
    };
    top.at = Some(rec.start);
    top
}

/// Per-period counters of one agent's own outcomes.
#[derive(Default, Clone, Copy)]
struct Tally {
    slots: u64,
    wins: u64,
    sent: u64,
    collided: u64,
}

impl Tally {
    fn summary(&self, period: u64, start: u64, action: &PolicyVector) -> PeriodSummary {
        PeriodSummary {
            period,
            start,
            action: action.render(),
            success_rate: self.wins as f64 / self.slots.max(1) as f64,
            collision_rate: self.collided as f64 / self.sent.max(1) as f64,
        }
    }
}

fn own_collision_rate(log: &TrajectoryLog, agent: NodeId, w: Window) -> Option<f64> {
    let slots = log.frame_range(w.start, w.end);
    let sent = slots.iter().filter(|e| e.transmitted(agent)).count();
    (sent > 0).then(|| {
        slots.iter().filter(|e| e.transmitted(agent) && e.outcome == SlotOutcome::Collided).count() as f64
            / sent as f64
    })
}

fn thresholds(cfg: &AgentConfig, window: u64) -> ObserverThresholds {
    ObserverThresholds {
        convergence_eps: cfg.convergence_eps,
        convergence_periods: cfg.convergence_periods,
        rate_shift: cfg.rate_shift,
        theta_hi: cfg.theta_hi,
        window,
    }
}

/// Runs a MAC scenario end to end.
pub fn run_mac(
    spec: &ScenarioSpec,
    decider: &mut dyn Decider,
    cfg: &AgentConfig,
    opts: &RunOptions,
) -> Result<MacRun, AgentError> {
    let mut env = Environment::build(spec)?;
    let fl = spec.frame_len;
    let space = ActionSpace::Mac { frame_len: fl };
    let p = cfg.period_frames(fl);
    let th = thresholds(cfg, cfg.window_frames);
    let agents = spec.agent_ids();
    let aware_ids = spec.ids_where(|k| matches!(k, NodeKind::Aware));
    let aware: Option<AwareTrajectory> = if aware_ids.is_empty() { None } else { Some(aware_trajectory(spec)?) };
    let mut rngs = agent_rngs(&agents, opts.seed);
    let mut current: BTreeMap<NodeId, (u64, u64, PolicyVector)> = BTreeMap::new();
    let mut history: BTreeMap<NodeId, Vec<PolicyVector>> = BTreeMap::new();
    let mut tallies: BTreeMap<NodeId, Tally> = BTreeMap::new();
    let mut periods = Vec::new();
    let mut trace = opts.tracing.then(|| DecisionTrace::new(&[]));
    let mut period_index: BTreeMap<NodeId, u64> = BTreeMap::new();

    for f in 0..spec.total_frames {
        env.apply_population_event(f);
        let live = env.live();
        current.retain(|id, _| live.contains(id));
        for &a in agents.iter().filter(|a| live.contains(a)) {
            if f % p != 0 && current.contains_key(&a) {
                continue;
            }
            if let Some((period, start, action)) = current.get(&a) {
                let summary = tallies.get(&a).copied().unwrap_or_default().summary(*period, *start, action);
                decider.observe(a, &summary);
            }
            let log = env.log();
            let decided = history.entry(a).or_default();
            let report = observer_analyze(log, a, f, decided, &th).ok();
            let w = since_change_window(log, f, cfg.window_frames, 2 * p);
            let announced = log.segments.iter().skip(1).any(|s| s.start_frame + p > f && s.start_frame <= f);
            let mut signals = Signals { perturb: opts.perturb, ..Default::default() };
            if !w.is_empty() {
                signals.utilization = Some(observed_utilization(log, a, w));
                signals.contenders = Some(estimate_contention(log, a, w, cfg.theta_hi).contenders);
                signals.collision_rate = own_collision_rate(log, a, w);
            }
            signals.env_changed = announced || report.as_ref().is_some_and(|r| r.env_changed);
            let period = *period_index.entry(a).and_modify(|i| *i += 1).or_insert(0);
            let previous = current.get(&a).map(|(_, _, v)| v.clone());
            let input = DecisionInput {
                agent: a,
                period,
                start: f,
                report: report.as_ref(),
                signals: &signals,
                space,
                previous: previous.as_ref(),
            };
            let rng = rngs.get_mut(&a).expect("agent stream");
            let decision = decider.decide(&input, rng)?;
            if decision.action.probs().map(<[f64]>::len) != Some(fl) {
                return Err(AgentError::DomainMismatch {
                    strategy: decision.action.domain(),
                    scenario: space.domain(),
                });
            }
            decided.push(decision.decided.clone());
            let mut findings = report.as_ref().map(ObserverReport::findings).unwrap_or_default();
            if announced && !findings.iter().any(|s| s == "environment changed") {
                findings.push("membership change announced".into());
            }
            let rec = PeriodRecord {
                agent: a,
                period,
                start: f,
                decision,
                env_changed: signals.env_changed,
                converged: report.as_ref().is_some_and(|r| r.converged),
                findings,
            };
            if let Some(t) = trace.as_mut() {
                let report_json = serde_json::to_string(&report).expect("report serializes");
                let signals_json = serde_json::to_string(&signals).expect("signals serialize");
                t.push(period_trace(&rec, &report_json, &signals_json));
            }
            current.insert(a, (period, f, rec.decision.action.clone()));
            tallies.insert(a, Tally::default());
            periods.push(rec);
        }
        let mut probs: BTreeMap<NodeId, f64> = BTreeMap::new();
        let aware_policy = aware.as_ref().and_then(|t| t.segments.iter().find(|s| s.start_frame <= f && f < s.end_frame));
        for slot in 0..fl {
            probs.clear();
            for (&a, (_, _, action)) in &current {
                probs.insert(a, action.probs().expect("mac action")[slot]);
            }
            if let Some(seg) = aware_policy {
                for &id in &aware_ids {
                    if let Some(pol) = seg.policy_for(id) {
                        probs.insert(id, pol[slot]);
                    }
                }
            }
            let res = env.step_with_probs(&probs)?;
            for (&a, t) in tallies.iter_mut() {
                if !current.contains_key(&a) {
                    continue;
                }
                let sent = res.transmitters.contains(&a);
                t.slots += 1;
                t.sent += u64::from(sent);
                t.wins += u64::from(sent && res.outcome == SlotOutcome::Success);
                t.collided += u64::from(sent && res.outcome == SlotOutcome::Collided);
            }
        }
    }
    if let Some(t) = trace.as_mut() {
        let ids: Vec<String> = {
            let mut v: Vec<String> = periods.iter().filter_map(|r| r.decision.strategy_id.clone()).collect();
            v.sort();
            v.dedup();
            v
        };
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        t.root = TraceNode { children: std::mem::take(&mut t.root.children), ..DecisionTrace::new(&refs).root };
    }
    Ok(MacRun { log: env.into_log(), periods, trace })
}

/// Runs a TCP scenario end to end. Agent flows hold their window for each
/// period; the loss trigger reads the fraction of recent rounds with loss.
pub fn run_tcp(
    spec: &TcpScenarioSpec,
    decider: &mut dyn Decider,
    cfg: &AgentConfig,
    opts: &RunOptions,
) -> Result<TcpRun, AgentError> {
    let mut env = TcpEnvironment::build(spec)?;
    let space = ActionSpace::Tcp { c_max: spec.c_max };
    let p = cfg.tcp.period_rounds.max(1);
    let th = thresholds(cfg, cfg.tcp.window_rounds);
    let agents = spec.agent_ids();
    let mut rngs = agent_rngs(&agents, opts.seed);
    let mut current: BTreeMap<NodeId, (u64, u64, PolicyVector)> = BTreeMap::new();
    let mut history: BTreeMap<NodeId, Vec<PolicyVector>> = BTreeMap::new();
    let mut periods = Vec::new();
    let mut trace = opts.tracing.then(|| DecisionTrace::new(&[]));
    let mut period_index: BTreeMap<NodeId, u64> = BTreeMap::new();
    let changed_at = |r: u64| r > 0 && spec.live_at(r) != spec.live_at(r - 1);

    for r in 0..spec.total_rounds {
        let live = env.live();
        current.retain(|id, _| live.contains(id));
        for &a in agents.iter().filter(|a| live.contains(a)) {
            if r % p != 0 && current.contains_key(&a) {
                continue;
            }
            let log = env.log();
            if let Some((period, start, action)) = current.get(&a) {
                if let Some(o) = tcp_observe(log, a, Window { start: *start, end: r }) {
                    decider.observe(
                        a,
                        &PeriodSummary {
                            period: *period,
                            start: *start,
                            action: action.render(),
                            success_rate: 1.0 - o.loss_rate,
                            collision_rate: o.loss_rate,
                        },
                    );
                }
            }
            let decided = history.entry(a).or_default();
            let report = tcp_observer_analyze(log, a, r, decided, &th).ok();
            let last = (r.saturating_sub(cfg.tcp.window_rounds)..=r).rev().find(|&q| changed_at(q));
            let mut start = r.saturating_sub(cfg.tcp.window_rounds);
            if let Some(c) = last {
                start = start.max(c);
            }
            start = start.min(r.saturating_sub(p));
            let obs = tcp_observe(log, a, Window { start, end: r });
            let announced = (r.saturating_sub(p - 1)..=r).any(changed_at);
            let signals = Signals {
                collision_rate: obs.as_ref().map(|o| o.loss_rate),
                rtt_inflation: obs.as_ref().map(|o| o.rtt_inflation),
                env_changed: announced || report.as_ref().is_some_and(|x| x.env_changed),
                perturb: opts.perturb,
                ..Default::default()
            };
            let period = *period_index.entry(a).and_modify(|i| *i += 1).or_insert(0);
            let previous = current.get(&a).map(|(_, _, v)| v.clone());
            let input = DecisionInput {
                agent: a,
                period,
                start: r,
                report: report.as_ref(),
                signals: &signals,
                space,
                previous: previous.as_ref(),
            };
            let rng = rngs.get_mut(&a).expect("agent stream");
            let decision = decider.decide(&input, rng)?;
            if decision.action.cwnd().is_none() {
                return Err(AgentError::DomainMismatch {
                    strategy: decision.action.domain(),
                    scenario: space.domain(),
                });
            }
            decided.push(decision.decided.clone());
            let mut findings = report.as_ref().map(ObserverReport::findings).unwrap_or_default();
            if let Some(o) = &obs {
                if o.loss_rate > 0.0 {
                    findings.push(format!("loss in {:.0}% of recent rounds", 100.0 * o.loss_rate));
                }
            }
            if announced && !findings.iter().any(|s| s == "environment changed") {
                findings.push("membership change announced".into());
            }
            let rec = PeriodRecord {
                agent: a,
                period,
                start: r,
                decision,
                env_changed: signals.env_changed,
                converged: report.as_ref().is_some_and(|x| x.converged),
                findings,
            };
            if let Some(t) = trace.as_mut() {
                let report_json = serde_json::to_string(&report).expect("report serializes");
                let signals_json = serde_json::to_string(&signals).expect("signals serialize");
                t.push(period_trace(&rec, &report_json, &signals_json));
            }
            current.insert(a, (period, r, rec.decision.action.clone()));
            periods.push(rec);
        }
        let overrides: BTreeMap<NodeId, u32> =
            current.iter().map(|(&a, (_, _, v))| (a, v.cwnd().expect("tcp action"))).collect();
        env.step_round(&overrides)?;
    }
    if let Some(t) = trace.as_mut() {
        let mut ids: Vec<String> = periods.iter().filter_map(|r| r.decision.strategy_id.clone()).collect();
        ids.sort();
        ids.dedup();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        t.root = TraceNode { children: std::mem::take(&mut t.root.children), ..DecisionTrace::new(&refs).root };
    }
    Ok(TcpRun { log: env.log().to_vec(), periods, trace })
}
