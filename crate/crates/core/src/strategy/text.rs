use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Strategy, StrategyBody, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    Syntax,
    UnknownName,
    Schema,
    Range,
    DanglingIndex,
    Domain,
}

/// A problem found while parsing or validating strategy text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

impl Diagnostic {
    pub fn at(kind: DiagnosticKind, path: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic { kind, message: message.into(), path: Some(path.into()), line: None, column: None }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = serde_json::to_value(self.kind).ok();
        let kind = kind.as_ref().and_then(|v| v.as_str()).unwrap_or("error");
        write!(f, "{kind}")?;
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, " at {l}:{c}")?;
        }
        if let Some(p) = &self.path {
            write!(f, " [{p}]")?;
        }
        write!(f, ": {}", self.message)
    }
}

pub(crate) fn canonical_text(body: &StrategyBody) -> String {
    serde_json::to_string(body).expect("strategy body serializes")
}

/// Canonical, byte-stable text of a strategy; its id is the SHA-256 of this.
pub fn serialize_strategy(s: &Strategy) -> String {
    canonical_text(&s.body)
}

/// Parses strategy text. Does not check ranges or references; see
/// [`super::validate_strategy`].
pub fn parse_strategy(text: &str) -> Result<Strategy, Vec<Diagnostic>> {
    let body: StrategyBody = serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        let kind = if message.contains("unknown variant") || message.contains("unknown field") {
            DiagnosticKind::UnknownName
        } else {
            DiagnosticKind::Syntax
        };
        vec![Diagnostic { kind, message, path: None, line: Some(e.line()), column: Some(e.column()) }]
    })?;
    if body.schema != SCHEMA_VERSION {
        return Err(vec![Diagnostic::at(
            DiagnosticKind::Schema,
            "schema",
            format!("expected \"{SCHEMA_VERSION}\", found \"{}\"", body.schema),
        )]);
    }
    Ok(Strategy::from_body(body))
}
