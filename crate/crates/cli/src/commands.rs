//! The subcommands as library functions. Each one writes its artifacts into a
//! directory and returns the main result so tests can inspect it directly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use cpnet_core::agent::{
    export_decision_trace, generate_demos, run_offline, run_online_mac, run_online_tcp, AgentConfig, DecisionTrace,
    EpisodicMemory, EvalScenario, Family, OfflineOutcome, PeriodRecord, RefinementRound, StrategySet,
};
use cpnet_core::backend::payload::DemoSet;
use cpnet_core::mac::{ScenarioSpec, TrajectoryLog};
use cpnet_core::metrics::{alpha_fair_clamped, jain_index, live_throughputs, rmse_vs_reference, windowed_throughput, ReferenceSeries};
use cpnet_core::oracle::{aware_trajectory, SegmentOracle};
use cpnet_core::strategy::{Domain, Strategy};
use cpnet_core::tcp::{mean_throughputs, RoundEntry, TcpScenarioSpec};
use serde::{Deserialize, Serialize};

use crate::artifacts::*;
use crate::config::{load_scenario, read_text, with_backend, BackendSelection, RunConfig};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricParameters {
    /// `frame` for MAC runs, `round` for TCP runs.
    pub unit: String,
    pub alpha: f64,
    pub rmse_window: u64,
    pub rmse_warmup: u64,
    /// Start of the range the fairness metrics cover; it ends with the run.
    pub objective_from: u64,
    pub objective_to: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub domain: Domain,
    pub scenario: String,
    pub seed: u64,
    pub parameters: MetricParameters,
    pub rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse_note: Option<String>,
    pub alpha_fair: Option<f64>,
    pub jain: Option<f64>,
    /// Mean throughput per node over the objective range. MAC values are
    /// success rates per live slot, TCP values packets per second.
    pub throughputs: BTreeMap<String, f64>,
}

pub fn mac_metrics(
    spec: &ScenarioSpec,
    log: &TrajectoryLog,
    reference: Result<&ReferenceSeries, String>,
    cfg: &AgentConfig,
) -> MetricsReport {
    let n = log.n_frames();
    let live = live_throughputs(log, n / 2, n);
    let xs: Vec<f64> = live.iter().map(|(_, x)| *x).collect();
    let rmse = reference.and_then(|r| {
        let series = windowed_throughput(log, cfg.rmse_window).map_err(|e| e.to_string())?;
        rmse_vs_reference(&series, r, cfg.rmse_warmup).map_err(|e| e.to_string())
    });
    MetricsReport {
        domain: Domain::Mac,
        scenario: spec.name.clone().unwrap_or_else(|| spec.population_label(&spec.live_at(0))),
        seed: spec.seed,
        parameters: MetricParameters {
            unit: "frame".into(),
            alpha: cfg.alpha,
            rmse_window: cfg.rmse_window,
            rmse_warmup: cfg.rmse_warmup,
            objective_from: n / 2,
            objective_to: n,
        },
        rmse_note: rmse.as_ref().err().cloned(),
        rmse: rmse.ok(),
        alpha_fair: (!xs.is_empty()).then(|| alpha_fair_clamped(&xs, cfg.alpha)),
        jain: jain_index(&xs).ok(),
        throughputs: live.into_iter().map(|(id, x)| (id.to_string(), x)).collect(),
    }
}

pub fn tcp_metrics(spec: &TcpScenarioSpec, log: &[RoundEntry], cfg: &AgentConfig) -> MetricsReport {
    let n = log.len() as u64;
    let means = mean_throughputs(log, n / 2, n);
    let xs: Vec<f64> = means.values().copied().collect();
    MetricsReport {
        domain: Domain::Tcp,
        scenario: spec.name.clone().unwrap_or_else(|| "tcp".into()),
        seed: spec.seed,
        parameters: MetricParameters {
            unit: "round".into(),
            alpha: cfg.alpha,
            rmse_window: cfg.rmse_window,
            rmse_warmup: cfg.rmse_warmup,
            objective_from: n / 2,
            objective_to: n,
        },
        rmse: None,
        rmse_note: Some("TCP scenarios have no oracle reference".into()),
        alpha_fair: None,
        jain: jain_index(&xs).ok(),
        throughputs: means.into_iter().map(|(id, x)| (id.to_string(), x)).collect(),
    }
}

/// Oracle reference for a MAC scenario, or the reason there is none.
fn reference_for(spec: &ScenarioSpec) -> Result<ReferenceSeries, String> {
    aware_trajectory(spec).map(|t| t.reference).map_err(|e| e.to_string())
}

fn with_seed(scenario: EvalScenario, seed: Option<u64>) -> (EvalScenario, u64) {
    match scenario {
        EvalScenario::Mac(mut s) => {
            s.seed = seed.unwrap_or(s.seed);
            let seed = s.seed;
            (EvalScenario::Mac(s), seed)
        }
        EvalScenario::Tcp(mut s) => {
            s.seed = seed.unwrap_or(s.seed);
            let seed = s.seed;
            (EvalScenario::Tcp(s), seed)
        }
    }
}

fn scenario_json(scenario: &EvalScenario) -> String {
    let mut text = match scenario {
        EvalScenario::Mac(s) => s.to_json(),
        EvalScenario::Tcp(s) => s.to_json(),
    };
    text.push('\n');
    text
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineSummary {
    pub family: Family,
    pub rounds: Vec<RefinementRound>,
    pub met_target: bool,
    pub retries: u32,
    pub final_strategy: Strategy,
}

fn write_offline(dir: &Path, family: Family, off: &OfflineOutcome) -> Result<(), CliError> {
    write_json(&dir.join(DEMOS), &off.demos)?;
    write_json(&dir.join(STRATEGIES), &off.set)?;
    write_json(&dir.join(EPISODES), &off.memory)?;
    write_json(
        &dir.join(OFFLINE),
        &OfflineSummary {
            family,
            rounds: off.rounds.clone(),
            met_target: off.met_target,
            retries: off.retries,
            final_strategy: off.final_strategy.clone(),
        },
    )
}

fn write_trace(dir: &Path, trace: Option<&DecisionTrace>) -> Result<(), CliError> {
    if let Some(t) = trace {
        write_text(&dir.join(TRACE), &(t.to_json() + "\n"))?;
        write_text(&dir.join(TRACE_DOT), &t.to_dot())?;
    }
    Ok(())
}

pub fn load_strategies(path: &Path) -> Result<StrategySet, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::invalid(path, e))
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub seed: u64,
    pub metrics: MetricsReport,
    pub periods: Vec<PeriodRecord>,
    pub trace: Option<DecisionTrace>,
}

/// Offline stage (unless a strategy set is supplied), then the online stage
/// on the configured scenario. Everything lands in `cfg.output`.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let (scenario, seed) = with_seed(load_scenario(&cfg.scenario)?, cfg.seed);
    let dir = cfg.output.clone();
    create_dir(&dir)?;
    write_json(&dir.join(CONFIG), &cfg.snapshot(seed))?;
    write_text(&dir.join(SCENARIO), &scenario_json(&scenario))?;
    let family = scenario.domain();
    let agent = &cfg.agent;

    with_backend(&cfg.backend, Some(&dir.join(TRANSCRIPT)), |backend| {
        let (set, mut memory) = match &cfg.strategies {
            Some(path) => (load_strategies(path)?, EpisodicMemory::default()),
            None => {
                let off = run_offline(family, backend, backend, agent, seed)?;
                write_offline(&dir, family, &off)?;
                (off.set, off.memory)
            }
        };
        if let Some(s) = set.strategies().iter().find(|s| s.domain() != family) {
            return Err(CliError::Config(format!("strategy set holds a {:?} strategy for a {family:?} scenario", s.domain())));
        }
        if cfg.strategies.is_some() {
            write_json(&dir.join(STRATEGIES), &set)?;
        }
        let (metrics, periods, trace) = match &scenario {
            EvalScenario::Mac(spec) => {
                let run = run_online_mac(spec, &set, &mut memory, backend, agent, seed)?;
                write_mac_trajectory(&dir.join(TRAJECTORY), &run.log)?;
                if let Ok(series) = windowed_throughput(&run.log, agent.rmse_window) {
                    let path = dir.join(THROUGHPUT);
                    let f = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
                    series.write_csv(std::io::BufWriter::new(f)).map_err(|e| CliError::invalid(&path, e))?;
                }
                let reference = reference_for(spec);
                if let Ok(r) = &reference {
                    write_reference(&dir.join(REFERENCE), r)?;
                }
                (mac_metrics(spec, &run.log, reference.as_ref().map_err(Clone::clone), agent), run.periods, run.trace)
            }
            EvalScenario::Tcp(spec) => {
                let run = run_online_tcp(spec, &set, &mut memory, backend, agent, seed)?;
                write_tcp_trajectory(&dir.join(TRAJECTORY), &run.log)?;
                (tcp_metrics(spec, &run.log, agent), run.periods, run.trace)
            }
        };
        write_periods(&dir.join(PERIODS), &periods)?;
        write_trace(&dir, trace.as_ref())?;
        write_json(&dir.join(METRICS), &metrics)?;
        Ok(RunOutcome { dir: dir.clone(), seed, metrics, periods, trace })
    })
}

/// Runs `replicas` seed replicas in parallel, replica `r` with seed
/// `base + r` in `output/replica-r`.
pub fn cmd_run_replicas(cfg: &RunConfig, replicas: u32) -> Result<Vec<RunOutcome>, CliError> {
    if replicas <= 1 {
        return cmd_run(cfg).map(|o| vec![o]);
    }
    cfg.validate()?;
    let (_, base) = with_seed(load_scenario(&cfg.scenario)?, cfg.seed);
    let configs: Vec<RunConfig> = (0..replicas)
        .map(|r| {
            let mut c = cfg.clone();
            c.seed = Some(base.wrapping_add(r as u64));
            c.output = cfg.output.join(format!("replica-{r}"));
            c
        })
        .collect();
    let results: Vec<Result<RunOutcome, CliError>> = thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|c| s.spawn(move || cmd_run(c))).collect();
        handles.into_iter().map(|h| h.join().expect("replica thread panicked")).collect()
    });
    results.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub scenario: String,
    pub segments: Vec<SegmentOracle>,
}

/// Solves every population segment of a MAC scenario and writes the policy
/// report plus the per-frame reference.
pub fn cmd_oracle(scenario: &Path, out: &Path) -> Result<OracleReport, CliError> {
    let EvalScenario::Mac(spec) = load_scenario(scenario)? else {
        return Err(CliError::Unsupported("the oracle covers MAC scenarios only".into()));
    };
    let traj = aware_trajectory(&spec)?;
    create_dir(out)?;
    let report = OracleReport {
        scenario: spec.name.clone().unwrap_or_else(|| spec.population_label(&spec.live_at(0))),
        segments: traj.segments,
    };
    write_json(&out.join(ORACLE), &report)?;
    write_reference(&out.join(REFERENCE), &traj.reference)?;
    Ok(report)
}

pub fn cmd_demos(family: Family, k: usize, seed: u64, cfg: &AgentConfig, out: &Path) -> Result<Vec<DemoSet>, CliError> {
    let demos = generate_demos(family, k, seed, cfg)?;
    create_dir(out)?;
    write_json(&out.join(DEMOS), &demos)?;
    Ok(demos)
}

/// The offline stage alone; its `strategies.json` can seed later runs.
pub fn cmd_offline(
    family: Family,
    backend: &BackendSelection,
    cfg: &AgentConfig,
    seed: u64,
    out: &Path,
) -> Result<OfflineOutcome, CliError> {
    create_dir(out)?;
    with_backend(backend, Some(&out.join(TRANSCRIPT)), |b| {
        let off = run_offline(family, b, b, cfg, seed)?;
        write_offline(out, family, &off)?;
        Ok(off)
    })
}

fn require_artifact(dir: &Path, name: &str) -> Result<PathBuf, CliError> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(CliError::MissingArtifact { dir: dir.to_path_buf(), artifact: name.to_string() })
    }
}

fn load_snapshot(run_dir: &Path) -> Result<RunConfig, CliError> {
    RunConfig::load(&require_artifact(run_dir, CONFIG)?)
}

/// Recomputes the metrics of a finished run from its artifacts. A reference
/// file replaces the oracle reference for RMSE.
pub fn cmd_eval(run_dir: &Path, reference: Option<&Path>) -> Result<MetricsReport, CliError> {
    let cfg = load_snapshot(run_dir)?;
    let scenario = load_scenario(&require_artifact(run_dir, SCENARIO)?)?;
    let trajectory = require_artifact(run_dir, TRAJECTORY)?;
    let report = match &scenario {
        EvalScenario::Mac(spec) => {
            let log = read_mac_trajectory(&trajectory, spec)?;
            let reference = match reference {
                Some(p) => Ok(read_reference(p)?),
                None => reference_for(spec),
            };
            mac_metrics(spec, &log, reference.as_ref().map_err(Clone::clone), &cfg.agent)
        }
        EvalScenario::Tcp(spec) => tcp_metrics(spec, &read_tcp_trajectory(&trajectory)?, &cfg.agent),
    };
    write_json(&run_dir.join(EVAL), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFiles {
    pub json: PathBuf,
    pub dot: PathBuf,
}

/// Writes the decision tree of a traced run as JSON and DOT.
pub fn cmd_trace(run_dir: &Path) -> Result<TraceFiles, CliError> {
    let cfg = load_snapshot(run_dir)?;
    if !cfg.agent.tracing {
        return Err(CliError::TracingDisabled { dir: run_dir.to_path_buf() });
    }
    let path = require_artifact(run_dir, TRACE)?;
    let trace: DecisionTrace = serde_json::from_str(&read_text(&path)?).map_err(|e| CliError::invalid(&path, e))?;
    let (json, dot) = export_decision_trace(Some(&trace))?;
    let files = TraceFiles { json: run_dir.join(TREE_JSON), dot: run_dir.join(TREE_DOT) };
    write_text(&files.json, &(json + "\n"))?;
    write_text(&files.dot, &dot)?;
    Ok(files)
}
