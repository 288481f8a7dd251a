//! Completion backends.
//!
//! [`CompletionBackend`] is the single seam through which the agents reach a
//! language model. Three implementations ship here: [`HttpBackend`] for
//! OpenAI-compatible chat endpoints, [`ScriptedBackend`], a deterministic
//! rule-based stand-in used for reproducible runs, and [`SequenceBackend`],
//! which replays canned responses for fault injection. [`TranscriptBackend`]
//! wraps any of them and records every exchange. Nothing else in the crate
//! touches the network.

mod http;
pub mod payload;
mod ranker;
mod scripted;
pub mod template;
mod transcript;

pub use http::{HttpBackend, HttpConfig, DEFAULT_API_KEY_ENV};
pub use ranker::{judge, ranked_complete, CandidateCheck, Choice, RankError, RankedOutcome, RankerQuery, ITEMS_PLACEHOLDER};
pub use scripted::ScriptedBackend;
pub use transcript::{TranscriptBackend, TranscriptEntry};

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }
}

fn default_max_tokens() -> u32 {
    2048
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub messages: Vec<Message>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Caller-chosen trace id.
    #[serde(default)]
    pub request_tag: String,
}

impl CompletionRequest {
    pub fn new(request_tag: impl Into<String>, messages: Vec<Message>) -> Self {
        CompletionRequest {
            messages,
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            request_tag: request_tag.into(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.messages.is_empty() {
            return Err(BackendError::InvalidRequest("request has no messages".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }

    /// All message contents joined, for content-keyed backends.
    pub fn full_text(&self) -> String {
        let parts: Vec<&str> = self.messages.iter().map(|m| m.content.as_str()).collect();
        parts.join("\n")
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend unavailable{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Unavailable { status: Option<u16>, message: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("prompt does not match a known template: {0}")]
    UnrecognizedTemplate(String),
}

/// A source of completions. Implementations must be safe to call from
/// several threads at once.
pub trait CompletionBackend: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError>;

    /// Whether independent requests benefit from being issued in parallel.
    fn concurrent(&self) -> bool {
        false
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for &B {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(req)
    }
    fn concurrent(&self) -> bool {
        (**self).concurrent()
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Box<B> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(req)
    }
    fn concurrent(&self) -> bool {
        (**self).concurrent()
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<B> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(req)
    }
    fn concurrent(&self) -> bool {
        (**self).concurrent()
    }
}

/// Replays a fixed list of responses in order, then keeps failing with
/// `Unavailable`. Useful for injecting malformed output or outages.
#[derive(Debug, Default)]
pub struct SequenceBackend {
    responses: Mutex<std::collections::VecDeque<Result<String, BackendError>>>,
    calls: Mutex<Vec<CompletionRequest>>,
}

impl SequenceBackend {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SequenceBackend {
            responses: Mutex::new(responses.into_iter().map(|s| Ok(s.into())).collect()),
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn with_results(results: Vec<Result<String, BackendError>>) -> Self {
        SequenceBackend { responses: Mutex::new(results.into()), calls: Mutex::new(Vec::new()) }
    }

    /// Requests received so far.
    pub fn calls(&self) -> Vec<CompletionRequest> {
        self.calls.lock().expect("lock").clone()
    }
}

impl CompletionBackend for SequenceBackend {
    fn name(&self) -> &str {
        "sequence"
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        req.validate()?;
        self.calls.lock().expect("lock").push(req.clone());
        self.responses.lock().expect("lock").pop_front().unwrap_or(Err(BackendError::Unavailable {
            status: None,
            message: "sequence exhausted".into(),
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_request_is_rejected() {
        let req = CompletionRequest::new("t", vec![]);
        assert!(matches!(ScriptedBackend::new().complete(&req), Err(BackendError::InvalidRequest(_))));
    }

    #[test]
    fn sequence_backend_replays_then_fails() {
        let b = SequenceBackend::new(["a", "b"]);
        let req = CompletionRequest::new("t", vec![Message::user("x")]);
        assert_eq!(b.complete(&req).unwrap(), "a");
        assert_eq!(b.complete(&req).unwrap(), "b");
        assert!(matches!(b.complete(&req), Err(BackendError::Unavailable { .. })));
        assert_eq!(b.calls().len(), 3);
    }
}
