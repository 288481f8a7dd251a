//! Run configuration and input loading.
//!
//! A run is described by a [`RunConfig`]. The snapshot written into every run
//! directory is itself a valid `RunConfig`, with the resolved seed and the
//! crate versions filled in.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use cpnet_core::agent::{AgentConfig, EvalScenario};
use cpnet_core::backend::{CompletionBackend, HttpBackend, HttpConfig, ScriptedBackend, TranscriptBackend};
use cpnet_core::mac::ScenarioSpec;
use cpnet_core::strategy::SCHEMA_VERSION as STRATEGY_SCHEMA;
use cpnet_core::tcp::TcpScenarioSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSelection {
    #[default]
    Scripted,
    Http(HttpConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: PathBuf,
    pub output: PathBuf,
    #[serde(default)]
    pub backend: BackendSelection,
    #[serde(default)]
    pub agent: AgentConfig,
    /// Replaces the scenario's own seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// A `strategies.json` from an earlier run; when set the offline stage
    /// is skipped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategies: Option<PathBuf>,
    /// Filled in by snapshots, ignored on input.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub versions: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new(scenario: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        RunConfig {
            scenario: scenario.into(),
            output: output.into(),
            backend: BackendSelection::Scripted,
            agent: AgentConfig::default(),
            seed: None,
            strategies: None,
            versions: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read_text(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::invalid(path, e))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        require_file(&self.scenario)?;
        if let Some(p) = &self.strategies {
            require_file(p)?;
        }
        let a = &self.agent;
        if a.period_slots == 0 || a.window_frames == 0 || a.rmse_window == 0 || a.tcp.period_rounds == 0 {
            return Err(CliError::Config("periods and windows must be positive".into()));
        }
        if !(0.0..=1.0).contains(&a.target_fraction) || !(0.0..=1.0).contains(&a.theta_hi) {
            return Err(CliError::Config("target_fraction and theta_hi must lie in [0, 1]".into()));
        }
        if a.asi_attempts == 0 || a.eval_episodes == 0 || a.demos_per_set == 0 {
            return Err(CliError::Config("asi_attempts, eval_episodes and demos_per_set must be positive".into()));
        }
        Ok(())
    }

    /// The snapshot stored as `config.json` in the run directory.
    pub fn snapshot(&self, seed: u64) -> RunConfig {
        let mut snap = self.clone();
        snap.seed = Some(seed);
        snap.versions = versions();
        snap
    }
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("cpnet".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("mac_scenario".to_string(), cpnet_core::mac::SCHEMA_VERSION.to_string()),
        ("tcp_scenario".to_string(), cpnet_core::tcp::SCHEMA_VERSION.to_string()),
        ("strategy".to_string(), STRATEGY_SCHEMA.to_string()),
    ])
}

pub fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingFile { path: path.to_path_buf() })
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    require_file(path)?;
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Loads a MAC or TCP scenario. TCP files are recognised by their schema
/// tag or, without one, by a `flows` list.
pub fn load_scenario(path: &Path) -> Result<EvalScenario, CliError> {
    let text = read_text(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::invalid(path, e))?;
    let is_tcp = match value.get("schema").and_then(|s| s.as_str()) {
        Some(s) => s == cpnet_core::tcp::SCHEMA_VERSION,
        None => value.get("flows").is_some(),
    };
    if is_tcp {
        TcpScenarioSpec::from_json(&text).map(EvalScenario::Tcp).map_err(|e| CliError::invalid(path, e))
    } else {
        ScenarioSpec::from_json(&text).map(EvalScenario::Mac).map_err(|e| CliError::invalid(path, e))
    }
}

/// Builds the selected backend with a transcript written to `transcript`
/// and hands it to `f`.
pub fn with_backend<R>(
    selection: &BackendSelection,
    transcript: Option<&Path>,
    f: impl FnOnce(&dyn CompletionBackend) -> Result<R, CliError>,
) -> Result<R, CliError> {
    fn wrap<B: CompletionBackend>(inner: B, path: Option<&Path>) -> Result<TranscriptBackend<B>, CliError> {
        match path {
            Some(p) => {
                if p.exists() {
                    fs::remove_file(p).map_err(|e| CliError::io(p, e))?;
                }
                TranscriptBackend::with_file(inner, p).map_err(|e| CliError::io(p, e))
            }
            None => Ok(TranscriptBackend::new(inner)),
        }
    }
    match selection {
        BackendSelection::Scripted => f(&wrap(ScriptedBackend, transcript)?),
        BackendSelection::Http(cfg) => f(&wrap(HttpBackend::new(cfg.clone()), transcript)?),
    }
}
