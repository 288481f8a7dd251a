//! A deterministic stand-in for a language model.
//!
//! The response is a pure function of the prompt text. The backend reads the
//! template header and the embedded JSON payloads and answers with a fixed
//! heuristic per template:
//!
//! * `strategy-gen`: take the best-rewarded action of each demo set and
//!   average them into the base action. If the sets disagree by more than
//!   [`SPREAD_FOR_SHARING`] in mean probability, add `always -> contention_share`;
//!   if a set is dynamic, add `env_change -> reset_exploration`. For TCP the
//!   loss-free and lossy optima become a base window plus an `adjust_cwnd`
//!   rule on the loss trigger.
//! * `reflection`: overused slots seen in failing episodes become an
//!   `avoid_slots` rule; otherwise the base action moves halfway toward the
//!   level the episodes point at.
//! * `judge`: the candidate with the higher estimated score, first on ties.
//! * `psa-conflict`: flag strategies with identical rules, or a rule on the
//!   same trigger with an opposing effect.
//! * `node-decision`: the most recently added strategy.
//! * `observer-summary`: the findings as short sentences.
//!
//! Like a model with a limited attention span, it reads only the first
//! [`ATTENTION_SPAN`] item blocks of a prompt, so reordering the items can
//! change its answer.

use serde_json::Value;

use super::payload::{
    DemoSet, DemoTuple, EpisodeSummary, GenContext, JudgeCandidate, NodeDecisionReply, ObsoleteFlag, ObsoleteReason, PsaReply,
    StrategyEntry,
};
use super::template::{self, find_data, find_items, find_template};
use super::{BackendError, CompletionBackend, CompletionRequest};
use crate::strategy::{
    parse_strategy, Domain, Effect, Explore, PolicyVector, Provenance, Rule, Strategy, StrategyBody, Trigger,
};

pub const ATTENTION_SPAN: usize = 3;
pub const SPREAD_FOR_SHARING: f64 = 0.1;

#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedBackend;

impl ScriptedBackend {
    pub fn new() -> Self {
        ScriptedBackend
    }
}

fn malformed(what: &str, e: impl std::fmt::Display) -> BackendError {
    BackendError::MalformedResponse(format!("scripted backend could not read {what}: {e}"))
}

fn data<T: serde::de::DeserializeOwned>(text: &str, name: &str) -> Result<T, BackendError> {
    let raw = find_data(text, name).ok_or_else(|| malformed(name, "block missing"))?;
    serde_json::from_str(raw).map_err(|e| malformed(name, e))
}

fn items<T: serde::de::DeserializeOwned>(text: &str) -> Result<Vec<T>, BackendError> {
    find_items(text)
        .into_iter()
        .take(ATTENTION_SPAN)
        .map(|(label, body)| serde_json::from_str(body).map_err(|e| malformed(label, e)))
        .collect()
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn strategy_reply(s: &Strategy) -> String {
    let pretty = serde_json::to_string_pretty(&s.body).expect("strategy serializes");
    format!("```json\n{pretty}\n```")
}

fn explore_of(ctx: &GenContext) -> Explore {
    Explore { epsilon: ctx.epsilon, sigma: ctx.sigma }
}

fn mean(v: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn generate(text: &str) -> Result<String, BackendError> {
    let ctx: GenContext = data(text, "context")?;
    let sets: Vec<DemoSet> = items(text)?;
    let best: Vec<_> = sets.iter().filter_map(|s| s.best()).collect();
    if best.is_empty() {
        return Err(malformed("demos", "no demonstration tuples"));
    }
    let dynamic = sets.iter().any(DemoSet::is_dynamic);
    let mut rules = Vec::new();
    let base = match ctx.domain {
        Domain::Mac => {
            let len = ctx.frame_len.ok_or_else(|| malformed("context", "frame_len missing"))?;
            let mut base = vec![0.0; len];
            for t in &best {
                for (b, p) in base.iter_mut().zip(t.action.probs().unwrap_or(&[])) {
                    *b += p / best.len() as f64;
                }
            }
            let levels: Vec<f64> = best.iter().filter_map(|t| mean(t.action.probs()?.iter().copied())).collect();
            let lo = levels.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = levels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo > SPREAD_FOR_SHARING {
                rules.push(Rule { when: Trigger::Always, then: Effect::ContentionShare });
            }
            PolicyVector::Probs(base.into_iter().map(round4).collect())
        }
        Domain::Tcp => {
            let lossy = |t: &DemoTuple| t.next_state.loss_rate.unwrap_or(0.0) > ctx.loss_threshold;
            let cw = |t: &DemoTuple| t.action.cwnd().unwrap_or(1) as f64;
            let calm = mean(best.iter().copied().filter(|t| !lossy(t)).map(cw));
            let loss = mean(best.iter().copied().filter(|t| lossy(t)).map(cw));
            let base = calm.or(loss).unwrap_or(1.0).round().max(1.0) as i64;
            if let (Some(_), Some(l)) = (calm, loss) {
                let delta = l.round() as i64 - base;
                if delta != 0 {
                    rules.push(Rule {
                        when: Trigger::CollisionRateAtLeast { threshold: ctx.loss_threshold },
                        then: Effect::AdjustCwnd { delta: delta as i32 },
                    });
                }
            }
            PolicyVector::Cwnd(base as u32)
        }
    };
    if dynamic {
        rules.push(Rule { when: Trigger::EnvChange, then: Effect::ResetExploration });
    }
    Ok(strategy_reply(&Strategy::new(base, rules, explore_of(&ctx), Provenance::Generated)))
}

fn reflect(text: &str) -> Result<String, BackendError> {
    let raw = find_data(text, "strategy").ok_or_else(|| malformed("strategy", "block missing"))?;
    let current = parse_strategy(raw).map_err(|d| malformed("strategy", &d[0]))?;
    let ctx: GenContext = data(text, "context")?;
    let episodes: Vec<EpisodeSummary> = items(text)?;
    let failing: Vec<&EpisodeSummary> = episodes.iter().filter(|e| e.failing()).collect();
    let mut body: StrategyBody = current.body.clone();
    body.provenance = Provenance::Refined;

    match ctx.domain {
        Domain::Mac => {
            let mut overused: Vec<usize> = failing
                .iter()
                .flat_map(|e| e.overused.iter())
                .filter(|n| n.utilization + 1e-12 >= ctx.theta_hi)
                .map(|n| n.slot)
                .collect();
            overused.sort_unstable();
            overused.dedup();
            let covered = |slots: &[usize]| {
                body.rules.iter().any(|r| match &r.then {
                    Effect::AvoidSlots { slots: Some(s) } => slots.iter().all(|k| s.contains(k)),
                    _ => false,
                })
            };
            if !overused.is_empty() && !covered(&overused) {
                body.rules.push(Rule {
                    when: Trigger::SlotUtilizationAtLeast { threshold: ctx.theta_hi, slots: Some(overused.clone()) },
                    then: Effect::AvoidSlots { slots: Some(overused) },
                });
            } else if let Some(target) = mean(failing.iter().filter_map(|e| e.random_contenders).map(|n| 1.0 / (n as f64 + 1.0))) {
                if let PolicyVector::Probs(p) = &mut body.base_action {
                    p.iter_mut().for_each(|v| *v = round4((*v + target) / 2.0));
                }
            }
        }
        Domain::Tcp => {
            let c_max = ctx.c_max.unwrap_or(u32::MAX) as i64;
            let base = body.base_action.cwnd().unwrap_or(1) as i64;
            let rule_idx = body.rules.iter().position(|r| {
                matches!((&r.when, &r.then), (Trigger::CollisionRateAtLeast { .. }, Effect::AdjustCwnd { .. }))
            });
            let delta = rule_idx
                .and_then(|i| match body.rules[i].then {
                    Effect::AdjustCwnd { delta } => Some(delta as i64),
                    _ => None,
                })
                .unwrap_or(0);
            // Worst-failing episode decides which regime to move.
            let worst = failing.iter().max_by(|a, b| a.shortfall.total_cmp(&b.shortfall));
            if let Some(e) = worst.filter(|e| e.competitor_cwnd.is_some()) {
                let comp = e.competitor_cwnd.unwrap_or(0.0);
                let lossy = rule_idx.is_some() && e.loss_rate.unwrap_or(0.0) > ctx.loss_threshold;
                let (new_base, new_delta) = if lossy {
                    let level = base + delta;
                    let moved = (((level as f64) + comp) / 2.0).round() as i64;
                    (base, moved.clamp(1, c_max) - base)
                } else {
                    let moved = ((((base as f64) + comp) / 2.0).round() as i64).clamp(1, c_max);
                    (moved, base + delta - moved)
                };
                body.base_action = PolicyVector::Cwnd(new_base as u32);
                match rule_idx {
                    Some(i) if new_delta == 0 => {
                        body.rules.remove(i);
                    }
                    Some(i) => body.rules[i].then = Effect::AdjustCwnd { delta: new_delta as i32 },
                    None => {}
                }
            }
        }
    }
    Ok(strategy_reply(&Strategy::from_body(body)))
}

fn judge_reply(text: &str) -> Result<String, BackendError> {
    let cands: Vec<JudgeCandidate> = data(text, "candidates")?;
    let score = |i: usize| cands.get(i).and_then(|c| c.estimated_j).unwrap_or(f64::NEG_INFINITY);
    let (choice, why) = if score(1) > score(0) {
        ("second", "second candidate has the higher estimated score")
    } else if score(0) > score(1) {
        ("first", "first candidate has the higher estimated score")
    } else {
        ("first", "estimated scores tie; keeping the first candidate")
    };
    Ok(serde_json::json!({"choice": choice, "rationale": why}).to_string())
}

fn psa(text: &str) -> Result<String, BackendError> {
    let new: StrategyEntry = data(text, "new")?;
    let existing: Vec<StrategyEntry> = data(text, "existing")?;
    let mut obsolete = Vec::new();
    for e in existing.iter().filter(|e| e.id != new.id) {
        if e.strategy.rules == new.strategy.rules {
            obsolete.push(ObsoleteFlag { id: e.id.clone(), reason: ObsoleteReason::Redundant });
            continue;
        }
        let contradicts = e.strategy.rules.iter().any(|old| {
            new.strategy.rules.iter().any(|r| r.when == old.when && r.then.opposes(&old.then))
        });
        if contradicts {
            obsolete.push(ObsoleteFlag { id: e.id.clone(), reason: ObsoleteReason::Contradicted });
        }
    }
    Ok(serde_json::to_string(&PsaReply { obsolete }).expect("json"))
}

fn node_decision(text: &str) -> Result<String, BackendError> {
    // Reads every item: the choice depends on recency, not on a subset.
    let strategies: Vec<StrategyEntry> = find_items(text)
        .into_iter()
        .map(|(label, body)| serde_json::from_str(body).map_err(|e| malformed(label, e)))
        .collect::<Result<_, _>>()?;
    let last = strategies.last().ok_or_else(|| malformed("strategies", "strategy memory is empty"))?;
    let reply = NodeDecisionReply { strategy_id: last.id.clone(), rationale: "most recent strategy in memory".into() };
    Ok(serde_json::to_string(&reply).expect("json"))
}

fn observer_summary(text: &str) -> Result<String, BackendError> {
    let report: Value = data(text, "report")?;
    let mut lines = Vec::new();
    if let Some(notable) = report.get("notable").and_then(Value::as_array) {
        for n in notable {
            let slot = n.get("slot").and_then(Value::as_u64).unwrap_or(0);
            let kind = n.get("kind").and_then(Value::as_str).unwrap_or("notable");
            let u = n.get("utilization").and_then(Value::as_f64).unwrap_or(0.0);
            lines.push(format!("Slot {slot} utilization {u:.2} ({kind})."));
        }
    }
    if report.get("env_changed").and_then(Value::as_bool) == Some(true) {
        lines.push("The environment changed.".into());
    }
    if report.get("converged").and_then(Value::as_bool) == Some(true) {
        lines.push("The action has converged.".into());
    }
    if lines.is_empty() {
        lines.push("Nothing notable.".into());
    }
    Ok(lines.join("\n"))
}

impl CompletionBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        req.validate()?;
        let text = req.full_text();
        let Some((name, _)) = find_template(&text) else {
            return Err(BackendError::UnrecognizedTemplate("no template header".into()));
        };
        match name {
            template::STRATEGY_GEN => generate(&text),
            template::REFLECTION => reflect(&text),
            template::JUDGE => judge_reply(&text),
            template::PSA_CONFLICT => psa(&text),
            template::NODE_DECISION => node_decision(&text),
            template::OBSERVER_SUMMARY => observer_summary(&text),
            other => Err(BackendError::UnrecognizedTemplate(other.to_string())),
        }
    }
}
