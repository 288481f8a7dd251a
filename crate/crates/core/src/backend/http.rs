use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use ureq::Agent;

use super::{BackendError, CompletionBackend, CompletionRequest};

/// Environment variable read for the bearer token when none is configured.
pub const DEFAULT_API_KEY_ENV: &str = "CPNET_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_key_env() -> String {
    DEFAULT_API_KEY_ENV.to_string()
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    500
}
fn default_timeout() -> u64 {
    120
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        HttpConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key_env: default_key_env(),
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
            timeout_secs: default_timeout(),
        }
    }
}

/// Client for an OpenAI-compatible chat-completions endpoint.
pub struct HttpBackend {
    config: HttpConfig,
    api_key: Option<String>,
    agent: Agent,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

enum Attempt {
    Done(Result<String, BackendError>),
    Transient(BackendError),
}

impl HttpBackend {
    /// Reads the key from the configured environment variable.
    pub fn new(config: HttpConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok();
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: HttpConfig, api_key: Option<String>) -> Self {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        HttpBackend { config, api_key, agent }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'))
    }

    fn attempt(&self, req: &CompletionRequest) -> Attempt {
        let body = json!({
            "model": self.config.model,
            "messages": req.messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let mut call = self.agent.post(&self.url()).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match call.send_json(&body) {
            Ok(r) => r,
            Err(e) => return Attempt::Transient(BackendError::Unavailable { status: None, message: e.to_string() }),
        };
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        if status >= 500 || status == 429 {
            return Attempt::Transient(BackendError::Unavailable { status: Some(status), message: snippet(&text) });
        }
        if status >= 400 {
            return Attempt::Done(Err(BackendError::Unavailable { status: Some(status), message: snippet(&text) }));
        }
        let parsed = serde_json::from_str::<ChatResponse>(&text)
            .map_err(|e| BackendError::MalformedResponse(format!("{e}: {}", snippet(&text))))
            .and_then(|r| {
                r.choices
                    .into_iter()
                    .next()
                    .and_then(|c| c.message.content)
                    .ok_or_else(|| BackendError::MalformedResponse("no choices in response".into()))
            });
        Attempt::Done(parsed)
    }
}

fn snippet(text: &str) -> String {
    text.chars().take(200).collect()
}

impl CompletionBackend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn concurrent(&self) -> bool {
        true
    }

    /// One round trip, retried with exponential backoff on 5xx, 429 and
    /// transport failures. Other 4xx statuses fail immediately.
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        req.validate()?;
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut last = None;
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(req) {
                Attempt::Done(r) => return r,
                Attempt::Transient(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}
