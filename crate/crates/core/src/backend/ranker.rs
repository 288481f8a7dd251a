//! Order-reversal ranking: ask the same question with the reorderable items
//! forward and reversed, then let a judge pick between the two answers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::payload::JudgeCandidate;
use super::template::{extract_json, find_template};
use super::{BackendError, CompletionBackend, CompletionRequest, Message};
use crate::prompts;

pub const ITEMS_PLACEHOLDER: &str = "{{ITEMS}}";

/// A request whose messages contain [`ITEMS_PLACEHOLDER`] exactly once, plus
/// the blocks that go there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerQuery {
    pub base: CompletionRequest,
    pub items: Vec<String>,
}

impl RankerQuery {
    pub fn new(base: CompletionRequest, items: Vec<String>) -> Self {
        RankerQuery { base, items }
    }

    fn render(&self, reversed: bool) -> CompletionRequest {
        let mut items: Vec<&str> = self.items.iter().map(String::as_str).collect();
        if reversed {
            items.reverse();
        }
        let joined = items.join("\n");
        let mut req = self.base.clone();
        for m in &mut req.messages {
            m.content = m.content.replace(ITEMS_PLACEHOLDER, &joined);
        }
        req
    }

    /// Items in the given order.
    pub fn forward(&self) -> CompletionRequest {
        let mut r = self.render(false);
        r.request_tag = format!("{}/q1", self.base.request_tag);
        r
    }

    /// Items reversed; otherwise identical to [`RankerQuery::forward`].
    pub fn reversed(&self) -> CompletionRequest {
        let mut r = self.render(true);
        r.request_tag = format!("{}/q2", self.base.request_tag);
        r
    }

    fn check(&self) -> Result<(), BackendError> {
        self.base.validate()?;
        if self.items.is_empty() {
            return Err(BackendError::InvalidRequest("ranker query has no items".into()));
        }
        let n: usize = self.base.messages.iter().map(|m| m.content.matches(ITEMS_PLACEHOLDER).count()).sum();
        if n != 1 {
            return Err(BackendError::InvalidRequest(format!("expected one {ITEMS_PLACEHOLDER} placeholder, found {n}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    First,
    Second,
}

/// What the caller knows about a candidate response before judging.
#[derive(Debug, Clone, PartialEq)]
pub enum CandidateCheck {
    Valid { estimated_j: Option<f64>, summary: String },
    Invalid { diagnostics: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedOutcome {
    pub response: String,
    pub choice: Choice,
    pub candidates: [String; 2],
    pub judge_invoked: bool,
    pub rationale: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("neither candidate is usable: {}", diagnostics.join(" | "))]
    BothUnparseable { candidates: [String; 2], diagnostics: [String; 2] },
}

#[derive(Deserialize)]
struct JudgeReply {
    choice: Choice,
    #[serde(default)]
    rationale: String,
}

/// Picks between two candidates. An invalid candidate loses without a
/// backend call. When the judge's reply cannot be read the first candidate
/// is kept and the rationale says so.
pub fn judge<J, F>(
    r1: &str,
    r2: &str,
    context: &str,
    judge_backend: &J,
    check: F,
) -> Result<(Choice, String, bool), RankError>
where
    J: CompletionBackend + ?Sized,
    F: Fn(&str) -> CandidateCheck,
{
    let (c1, c2) = (check(r1), check(r2));
    let (j1, s1, j2, s2) = match (c1, c2) {
        (CandidateCheck::Invalid { diagnostics: d1 }, CandidateCheck::Invalid { diagnostics: d2 }) => {
            return Err(RankError::BothUnparseable { candidates: [r1.into(), r2.into()], diagnostics: [d1, d2] })
        }
        (CandidateCheck::Invalid { diagnostics }, CandidateCheck::Valid { .. }) => {
            return Ok((Choice::Second, format!("first candidate invalid: {diagnostics}"), false))
        }
        (CandidateCheck::Valid { .. }, CandidateCheck::Invalid { diagnostics }) => {
            return Ok((Choice::First, format!("second candidate invalid: {diagnostics}"), false))
        }
        (
            CandidateCheck::Valid { estimated_j: j1, summary: s1 },
            CandidateCheck::Valid { estimated_j: j2, summary: s2 },
        ) => (j1, s1, j2, s2),
    };
    let candidates = [
        JudgeCandidate { label: "first".into(), estimated_j: j1, summary: s1, response: r1.into() },
        JudgeCandidate { label: "second".into(), estimated_j: j2, summary: s2, response: r2.into() },
    ];
    let candidates = serde_json::to_string_pretty(&candidates).expect("json");
    let prompt = prompts::fill(prompts::JUDGE, &[("task", context), ("candidates", &candidates)]);
    let req = CompletionRequest::new("judge", vec![Message::system(prompts::SYSTEM), Message::user(prompt)]);
    let reply = judge_backend.complete(&req)?;
    match serde_json::from_str::<JudgeReply>(extract_json(&reply)) {
        Ok(r) => Ok((r.choice, r.rationale, true)),
        Err(e) => Ok((Choice::First, format!("judge reply unreadable ({e}); first candidate kept"), true)),
    }
}

/// Issues both orderings, then judges unless the answers coincide.
pub fn ranked_complete<B, J, F>(
    q: &RankerQuery,
    backend: &B,
    judge_backend: &J,
    check: F,
) -> Result<RankedOutcome, RankError>
where
    B: CompletionBackend + ?Sized,
    J: CompletionBackend + ?Sized,
    F: Fn(&str) -> CandidateCheck,
{
    q.check()?;
    let (q1, q2) = (q.forward(), q.reversed());
    let (r1, r2) = if backend.concurrent() {
        std::thread::scope(|s| {
            let h1 = s.spawn(|| backend.complete(&q1));
            let h2 = s.spawn(|| backend.complete(&q2));
            (h1.join().expect("ranker thread"), h2.join().expect("ranker thread"))
        })
    } else {
        (backend.complete(&q1), backend.complete(&q2))
    };
    let (r1, r2) = (r1?, r2?);
    if r1 == r2 {
        return Ok(RankedOutcome {
            response: r1.clone(),
            choice: Choice::First,
            candidates: [r1, r2],
            judge_invoked: false,
            rationale: "both orderings gave the same response".into(),
        });
    }
    let context = q
        .base
        .messages
        .iter()
        .find_map(|m| find_template(&m.content))
        .map(|(name, version)| format!("respond to the {name} {version} prompt"))
        .unwrap_or_default();
    let (choice, rationale, judge_invoked) = judge(&r1, &r2, &context, judge_backend, check)?;
    let response = match choice {
        Choice::First => r1.clone(),
        Choice::Second => r2.clone(),
    };
    Ok(RankedOutcome { response, choice, candidates: [r1, r2], judge_invoked, rationale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::SequenceBackend;

    fn query(items: &[&str]) -> RankerQuery {
        RankerQuery::new(
            CompletionRequest::new("t", vec![Message::system("s"), Message::user(format!("head\n{ITEMS_PLACEHOLDER}\ntail"))]),
            items.iter().map(|s| s.to_string()).collect(),
        )
    }

    fn valid(j: f64) -> CandidateCheck {
        CandidateCheck::Valid { estimated_j: Some(j), summary: String::new() }
    }

    #[test]
    fn reversal_is_confined_to_items() {
        let q = query(&["d1", "d2", "d3"]);
        assert_eq!(q.forward().messages[1].content, "head\nd1\nd2\nd3\ntail");
        assert_eq!(q.reversed().messages[1].content, "head\nd3\nd2\nd1\ntail");
        assert_eq!(q.forward().messages[0], q.reversed().messages[0]);
    }

    #[test]
    fn equal_answers_skip_the_judge() {
        let b = SequenceBackend::new(["same", "same"]);
        let judge_b = SequenceBackend::new(Vec::<String>::new());
        let out = ranked_complete(&query(&["a"]), &b, &judge_b, |_| valid(0.0)).unwrap();
        assert!(!out.judge_invoked);
        assert_eq!(out.response, "same");
        assert!(judge_b.calls().is_empty());
    }

    #[test]
    fn invalid_candidate_loses_without_a_call() {
        let judge_b = SequenceBackend::new(Vec::<String>::new());
        let check = |r: &str| if r == "bad" { CandidateCheck::Invalid { diagnostics: "x".into() } } else { valid(1.0) };
        let (c, _, invoked) = judge("bad", "good", "", &judge_b, check).unwrap();
        assert_eq!((c, invoked), (Choice::Second, false));
        assert!(judge_b.calls().is_empty());
        let both = judge("bad", "bad", "", &judge_b, check);
        assert!(matches!(both, Err(RankError::BothUnparseable { .. })));
    }

    #[test]
    fn unreadable_judge_keeps_first() {
        let judge_b = SequenceBackend::new(["no idea"]);
        let (c, why, invoked) = judge("a", "b", "", &judge_b, |_| valid(0.0)).unwrap();
        assert_eq!(c, Choice::First);
        assert!(invoked);
        assert!(why.contains("unreadable"));
    }

    #[test]
    fn missing_placeholder_is_rejected() {
        let q = RankerQuery::new(CompletionRequest::new("t", vec![Message::user("x")]), vec!["a".into()]);
        let b = SequenceBackend::new(["a"]);
        assert!(matches!(ranked_complete(&q, &b, &b, |_| valid(0.0)), Err(RankError::Backend(_))));
    }
}
