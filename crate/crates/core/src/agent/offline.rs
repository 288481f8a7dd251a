//! The offline stage: demonstrations, first strategy, evaluation, reflection
//! and strategy-set maintenance.

use serde::{Deserialize, Serialize};

use super::demos::generate_demos;
use super::evaluate::{evaluate_suite, Evaluation};
use super::memory::{EpisodeRecord, EpisodicMemory, RemovalReason, StrategySet};
use super::scenarios::{mac_label_scenario, tcp_label_scenario, Label};
use super::{AgentConfig, AgentError, Family};
use crate::backend::payload::{DemoSet, GenContext, ObsoleteReason, PsaReply, StrategyEntry};
use crate::backend::template::{extract_json, item_block};
use crate::backend::{
    ranked_complete, CandidateCheck, CompletionBackend, CompletionRequest, Message, RankError, RankedOutcome,
    RankerQuery, Role, ITEMS_PLACEHOLDER,
};
use crate::prompts;
use crate::strategy::{
    parse_strategy, serialize_strategy, validate_strategy, ActionSpace, Diagnostic, Provenance, Strategy,
};

/// A strategy obtained from backend text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Materialized {
    pub strategy: Strategy,
    /// Re-queries needed after the first response.
    pub retries: u32,
    /// Diagnostics of every rejected response, in order.
    pub diagnostics: Vec<Vec<Diagnostic>>,
    /// The raw response that became the strategy.
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranked: Option<RankedOutcome>,
}

fn compile(text: &str, space: &ActionSpace) -> Result<Strategy, Vec<Diagnostic>> {
    let s = parse_strategy(extract_json(text))?;
    validate_strategy(&s, space)?;
    Ok(s)
}

fn diagnostics_message(diags: &[Diagnostic]) -> String {
    let lines: Vec<String> = diags.iter().map(|d| format!("- {d}")).collect();
    format!(
        "The previous reply could not be used as a strategy:\n{}\nReply with a corrected strategy JSON only.",
        lines.join("\n")
    )
}

/// Parses and validates `response`. On failure the backend is asked again
/// with the rejected reply and its diagnostics appended to `req`. `attempts`
/// counts responses checked, the first one included.
pub fn asi_materialize(
    response: &str,
    req: &CompletionRequest,
    backend: &dyn CompletionBackend,
    attempts: u32,
    space: &ActionSpace,
) -> Result<Materialized, AgentError> {
    if attempts == 0 {
        return Err(AgentError::Precondition("at least one materialization attempt is required".into()));
    }
    let mut bundles: Vec<Vec<Diagnostic>> = Vec::new();
    let mut convo = req.clone();
    let mut text = response.to_string();
    loop {
        match compile(&text, space) {
            Ok(strategy) => {
                return Ok(Materialized {
                    strategy,
                    retries: bundles.len() as u32,
                    diagnostics: bundles,
                    response: text,
                    ranked: None,
                })
            }
            Err(diags) => {
                convo.messages.push(Message { role: Role::Assistant, content: text.clone() });
                convo.messages.push(Message::user(diagnostics_message(&diags)));
                bundles.push(diags);
                if bundles.len() as u32 >= attempts {
                    return Err(AgentError::MaterializationExhausted { bundles });
                }
                convo.request_tag = format!("{}/retry{}", req.request_tag, bundles.len());
                text = backend.complete(&convo)?;
            }
        }
    }
}

/// Action space of a family's labelled scenarios.
pub fn family_space(family: Family) -> ActionSpace {
    match family {
        Family::Mac => ActionSpace::Mac { frame_len: mac_label_scenario(Label::Aloha, 1, 0).frame_len },
        Family::Tcp => ActionSpace::Tcp { c_max: tcp_label_scenario(Label::Reno, 1, 0).c_max },
    }
}

pub fn gen_context(family: Family, cfg: &AgentConfig) -> GenContext {
    let space = family_space(family);
    let (frame_len, c_max, sigma) = match space {
        ActionSpace::Mac { frame_len } => (Some(frame_len), None, cfg.sigma),
        ActionSpace::Tcp { c_max } => (None, Some(c_max), cfg.tcp.sigma),
    };
    GenContext {
        domain: family,
        frame_len,
        c_max,
        theta_hi: cfg.theta_hi,
        loss_threshold: cfg.tcp.loss_threshold,
        epsilon: cfg.escape_epsilon,
        sigma,
    }
}

fn mean_j(evals: &[Evaluation]) -> f64 {
    evals.iter().map(|e| e.j).sum::<f64>() / evals.len().max(1) as f64
}

/// Sends `q` (ranked when enabled) and materializes the answer.
fn obtain(
    q: &RankerQuery,
    backend: &dyn CompletionBackend,
    judge: &dyn CompletionBackend,
    cfg: &AgentConfig,
    seed: u64,
    space: &ActionSpace,
) -> Result<Materialized, AgentError> {
    let plain = {
        let mut r = q.base.clone();
        for m in &mut r.messages {
            m.content = m.content.replace(ITEMS_PLACEHOLDER, &q.items.join("\n"));
        }
        r
    };
    if !cfg.ranker_offline {
        let response = backend.complete(&plain)?;
        return asi_materialize(&response, &plain, backend, cfg.asi_attempts, space);
    }
    let check = |r: &str| match compile(r, space) {
        Ok(s) => match evaluate_suite(&s, cfg, seed) {
            Ok(evals) => CandidateCheck::Valid {
                estimated_j: Some(mean_j(&evals)),
                summary: format!("{} rules, base {}", s.body.rules.len(), s.body.base_action.render()),
            },
            Err(e) => CandidateCheck::Invalid { diagnostics: e.to_string() },
        },
        Err(d) => CandidateCheck::Invalid {
            diagnostics: d.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
        },
    };
    match ranked_complete(q, backend, judge, check) {
        Ok(outcome) => {
            let req = match outcome.choice {
                crate::backend::Choice::First => q.forward(),
                crate::backend::Choice::Second => q.reversed(),
            };
            let mut m = asi_materialize(&outcome.response, &req, backend, cfg.asi_attempts, space)?;
            m.ranked = Some(outcome);
            Ok(m)
        }
        Err(RankError::Backend(e)) => Err(e.into()),
        Err(RankError::BothUnparseable { candidates, .. }) => {
            asi_materialize(&candidates[0], &q.forward(), backend, cfg.asi_attempts, space)
        }
    }
}

/// First strategy from the demonstrations, provenance `generated`.
pub fn generate_initial_strategy(
    demos: &[DemoSet],
    backend: &dyn CompletionBackend,
    judge: &dyn CompletionBackend,
    cfg: &AgentConfig,
    seed: u64,
) -> Result<Materialized, AgentError> {
    let Some(first) = demos.first() else {
        return Err(AgentError::Precondition("no demonstration sets given".into()));
    };
    let family = first.domain;
    if demos.iter().any(|d| d.domain != family || d.tuples.is_empty()) {
        return Err(AgentError::Precondition("demonstration sets must be non-empty and share one domain".into()));
    }
    let ctx = serde_json::to_string(&gen_context(family, cfg)).expect("context serializes");
    let prompt = prompts::fill(prompts::STRATEGY_GEN, &[("context", &ctx)]);
    let items = demos
        .iter()
        .map(|d| item_block(&d.label, &serde_json::to_string(d).expect("demos serialize")))
        .collect();
    let base = CompletionRequest::new("strategy-gen", vec![Message::system(prompts::SYSTEM), Message::user(prompt)]);
    let mut m = obtain(&RankerQuery::new(base, items), backend, judge, cfg, seed, &family_space(family))?;
    m.strategy = m.strategy.with_body(|b| b.provenance = Provenance::Generated);
    Ok(m)
}

/// One reflection round on a strategy that missed its target.
pub fn reflect_and_refine(
    s: &Strategy,
    record: &EpisodeRecord,
    backend: &dyn CompletionBackend,
    judge: &dyn CompletionBackend,
    cfg: &AgentConfig,
    seed: u64,
) -> Result<Materialized, AgentError> {
    if record.meets_target() {
        return Err(AgentError::TargetAlreadyMet { j: record.j_estimate, j_opt: record.j_opt });
    }
    let family = s.domain();
    let ctx = serde_json::to_string(&gen_context(family, cfg)).expect("context serializes");
    let prompt =
        prompts::fill(prompts::REFLECTION, &[("strategy", &serialize_strategy(s)), ("context", &ctx)]);
    let items = record
        .episodes
        .iter()
        .map(|e| item_block(&e.scenario, &serde_json::to_string(e).expect("episode serializes")))
        .collect();
    let base = CompletionRequest::new("reflection", vec![Message::system(prompts::SYSTEM), Message::user(prompt)]);
    let mut m = obtain(&RankerQuery::new(base, items), backend, judge, cfg, seed, &family_space(family))?;
    m.strategy = m.strategy.with_body(|b| b.provenance = Provenance::Refined);
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsaOutcome {
    pub inserted: bool,
    pub removed: Vec<(String, RemovalReason)>,
    /// Whether the conflict prompt was sent.
    pub queried: bool,
}

/// Adds `new` to the set and removes the strategies the backend flags as
/// redundant with it or contradicted by it. A duplicate is skipped without
/// a backend call.
pub fn psa_update(
    set: &mut StrategySet,
    new: Strategy,
    backend: &dyn CompletionBackend,
) -> Result<PsaOutcome, AgentError> {
    let new_id = new.id.clone();
    if !set.insert(new.clone()) {
        return Ok(PsaOutcome { inserted: false, removed: Vec::new(), queried: false });
    }
    let existing: Vec<StrategyEntry> = set
        .strategies()
        .iter()
        .filter(|s| s.id != new_id)
        .map(|s| StrategyEntry { id: s.id.clone(), strategy: s.body.clone() })
        .collect();
    if existing.is_empty() {
        return Ok(PsaOutcome { inserted: true, removed: Vec::new(), queried: false });
    }
    let new_json =
        serde_json::to_string(&StrategyEntry { id: new_id.clone(), strategy: new.body }).expect("entry serializes");
    let existing_json = serde_json::to_string(&existing).expect("entries serialize");
    let prompt = prompts::fill(prompts::PSA_CONFLICT, &[("new", &new_json), ("existing", &existing_json)]);
    let req = CompletionRequest::new("psa", vec![Message::system(prompts::SYSTEM), Message::user(prompt)]);
    let reply = backend.complete(&req)?;
    let parsed: PsaReply = serde_json::from_str(extract_json(&reply))
        .map_err(|e| crate::backend::BackendError::MalformedResponse(format!("conflict reply: {e}")))?;
    let mut removed = Vec::new();
    for flag in parsed.obsolete {
        if flag.id == new_id {
            continue;
        }
        let reason = match flag.reason {
            ObsoleteReason::Redundant => RemovalReason::Redundant,
            ObsoleteReason::Contradicted => RemovalReason::Contradicted,
        };
        if set.remove(&flag.id, reason) {
            removed.push((flag.id, reason));
        }
    }
    Ok(PsaOutcome { inserted: true, removed, queried: true })
}

/// What happened in one evaluation round of the offline loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementRound {
    pub t: u32,
    pub strategy_id: String,
    pub j_estimate: f64,
    pub j_opt: f64,
    pub met_target: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineOutcome {
    pub demos: Vec<DemoSet>,
    pub set: StrategySet,
    pub memory: EpisodicMemory,
    pub rounds: Vec<RefinementRound>,
    pub final_strategy: Strategy,
    pub met_target: bool,
    /// Materialization retries summed over all backend responses.
    pub retries: u32,
}

fn record_for(s: &Strategy, evals: Vec<Evaluation>) -> EpisodeRecord {
    let n = evals.len().max(1) as f64;
    EpisodeRecord {
        strategy_id: s.id.clone(),
        j_estimate: evals.iter().map(|e| e.j).sum::<f64>() / n,
        j_opt: evals.iter().map(|e| e.summary.j_opt).sum::<f64>() / n,
        episodes: evals.into_iter().map(|e| e.summary).collect(),
        reflection_text: None,
    }
}

/// Demonstrations, first strategy, then evaluate and refine until every
/// evaluation scenario meets its target or `n_max` refinements were made.
pub fn run_offline(
    family: Family,
    backend: &dyn CompletionBackend,
    judge: &dyn CompletionBackend,
    cfg: &AgentConfig,
    seed: u64,
) -> Result<OfflineOutcome, AgentError> {
    let demos = generate_demos(family, cfg.demos_per_set, seed, cfg)?;
    let first = generate_initial_strategy(&demos, backend, judge, cfg, seed)?;
    let mut retries = first.retries;
    let mut set = StrategySet::new();
    psa_update(&mut set, first.strategy.clone(), backend)?;
    let mut memory = EpisodicMemory::default();
    let mut rounds = Vec::new();
    let mut s = first.strategy;
    let mut met_target = false;
    for t in 0..=cfg.n_max {
        let record = record_for(&s, evaluate_suite(&s, cfg, seed)?);
        met_target = record.meets_target();
        rounds.push(RefinementRound {
            t,
            strategy_id: s.id.clone(),
            j_estimate: record.j_estimate,
            j_opt: record.j_opt,
            met_target,
        });
        memory.push(record.clone())?;
        if met_target || t == cfg.n_max {
            break;
        }
        let refined = reflect_and_refine(&s, &record, backend, judge, cfg, seed)?;
        retries += refined.retries;
        memory.set_reflection(memory.records().len() - 1, refined.response.clone())?;
        if refined.strategy.id == s.id {
            // Re-evaluating an unchanged strategy would repeat the same result.
            break;
        }
        psa_update(&mut set, refined.strategy.clone(), backend)?;
        s = refined.strategy;
    }
    Ok(OfflineOutcome { demos, set, memory, rounds, final_strategy: s, met_target, retries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendError, ScriptedBackend, SequenceBackend};
    use crate::strategy::{Explore, PolicyVector};

    const SPACE: ActionSpace = ActionSpace::Mac { frame_len: 10 };

    fn valid() -> String {
        serialize_strategy(&Strategy::new(
            PolicyVector::Probs(vec![0.3; 10]),
            vec![],
            Explore { epsilon: 0.0, sigma: 0.0 },
            Provenance::Generated,
        ))
    }

    fn req() -> CompletionRequest {
        CompletionRequest::new("t", vec![Message::user("### template: strategy-gen v1\nwrite one")])
    }

    #[test]
    fn one_retry_recovers_from_malformed_output() {
        let backend = SequenceBackend::new([valid()]);
        let m = asi_materialize("{\"schema\": \"strategy-v1\",", &req(), &backend, 3, &SPACE).unwrap();
        assert_eq!(m.retries, 1);
        assert_eq!(m.diagnostics.len(), 1);
        let calls = backend.calls();
        assert_eq!(calls.len(), 1);
        let roles: Vec<Role> = calls[0].messages.iter().map(|m| m.role).collect();
        assert_eq!(roles, [Role::User, Role::Assistant, Role::User]);
    }

    #[test]
    fn exhaustion_carries_every_bundle() {
        let backend = SequenceBackend::new(["not json"]);
        let err = asi_materialize("nope", &req(), &backend, 2, &SPACE).unwrap_err();
        match err {
            AgentError::MaterializationExhausted { bundles } => assert_eq!(bundles.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn outage_during_retry_is_a_backend_error() {
        let backend = SequenceBackend::with_results(vec![Err(BackendError::Unavailable { status: Some(503), message: "down".into() })]);
        assert!(matches!(asi_materialize("nope", &req(), &backend, 3, &SPACE), Err(AgentError::Backend(_))));
    }

    #[test]
    fn psa_duplicate_skips_the_backend() {
        let s = parse_strategy(&valid()).unwrap();
        let mut set = StrategySet::new();
        let backend = SequenceBackend::new(Vec::<String>::new());
        assert!(psa_update(&mut set, s.clone(), &backend).unwrap().inserted);
        let out = psa_update(&mut set, s, &backend).unwrap();
        assert!(!out.inserted && !out.queried);
        assert!(backend.calls().is_empty());
    }

    #[test]
    fn psa_removes_contradicted_strategies() {
        use crate::strategy::{Effect, Rule, Trigger};
        let mk = |d: i32| {
            Strategy::new(
                PolicyVector::Cwnd(10),
                vec![Rule { when: Trigger::CollisionRateAtLeast { threshold: 0.02 }, then: Effect::AdjustCwnd { delta: d } }],
                Explore { epsilon: 0.0, sigma: 0.0 },
                Provenance::Generated,
            )
        };
        let mut set = StrategySet::new();
        psa_update(&mut set, mk(2), &ScriptedBackend).unwrap();
        let out = psa_update(&mut set, mk(-2), &ScriptedBackend).unwrap();
        assert_eq!(out.removed, vec![(mk(2).id, RemovalReason::Contradicted)]);
        assert_eq!(set.ids(), vec![mk(-2).id.as_str()]);
    }

    #[test]
    fn refinement_requires_a_shortfall() {
        let s = parse_strategy(&valid()).unwrap();
        let rec = EpisodeRecord { strategy_id: s.id.clone(), j_estimate: 1.0, j_opt: 0.5, episodes: vec![], reflection_text: None };
        let backend = SequenceBackend::new(Vec::<String>::new());
        let err = reflect_and_refine(&s, &rec, &backend, &backend, &AgentConfig::default(), 0).unwrap_err();
        assert!(matches!(err, AgentError::TargetAlreadyMet { .. }));
    }
}
