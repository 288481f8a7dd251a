use std::io;
use std::path::{Path, PathBuf};

use cpnet_core::agent::AgentError;
use cpnet_core::oracle::OracleError;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("file not found: {}", path.display())]
    MissingFile { path: PathBuf },
    #[error("invalid configuration in {}: {reason}", path.display())]
    InvalidFile { path: PathBuf, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("run directory {} has no {artifact}", dir.display())]
    MissingArtifact { dir: PathBuf, artifact: String },
    #[error("the run in {} was executed without tracing", dir.display())]
    TracingDisabled { dir: PathBuf },
    #[error("backend error: {0}")]
    Backend(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("{0}")]
    Agent(AgentError),
    #[error("i/o error on {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn invalid(path: &Path, reason: impl ToString) -> Self {
        CliError::InvalidFile { path: path.to_path_buf(), reason: reason.to_string() }
    }

    /// Process exit code: 2 for configuration and input problems, 3 for
    /// backend failures, 4 for populations the oracle cannot solve.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingFile { .. }
            | CliError::InvalidFile { .. }
            | CliError::Config(_)
            | CliError::MissingArtifact { .. }
            | CliError::TracingDisabled { .. } => 2,
            CliError::Backend(_) => 3,
            CliError::Unsupported(_) => 4,
            CliError::Agent(_) | CliError::Io { .. } => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::MissingFile { .. } => "missing_file",
            CliError::InvalidFile { .. } | CliError::Config(_) => "config",
            CliError::MissingArtifact { .. } => "missing_artifact",
            CliError::TracingDisabled { .. } => "tracing_disabled",
            CliError::Backend(_) => "backend",
            CliError::Unsupported(_) => "unsupported_population",
            CliError::Agent(_) => "agent",
            CliError::Io { .. } => "io",
        }
    }

    /// One-line JSON summary for stderr.
    pub fn to_json(&self) -> String {
        let path = match self {
            CliError::MissingFile { path } | CliError::InvalidFile { path, .. } | CliError::Io { path, .. } => {
                Some(path.display().to_string())
            }
            CliError::MissingArtifact { dir, .. } | CliError::TracingDisabled { dir } => Some(dir.display().to_string()),
            _ => None,
        };
        json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
            "path": path,
        })
        .to_string()
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Backend(_) | AgentError::MaterializationExhausted { .. } => CliError::Backend(e.to_string()),
            AgentError::Oracle(o @ OracleError::UnsupportedPopulation { .. }) => CliError::Unsupported(o.to_string()),
            AgentError::InvalidConfig(reason) => CliError::Config(reason),
            other => CliError::Agent(other),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::UnsupportedPopulation { .. } => CliError::Unsupported(e.to_string()),
            other => CliError::Agent(AgentError::Oracle(other)),
        }
    }
}
