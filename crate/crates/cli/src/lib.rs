//! Experiment entrypoints for cpnet.
//!
//! Each subcommand of the `cpnet` binary maps to a `cmd_*` function here that
//! writes into a run directory:
//!
//! | file | content |
//! |---|---|
//! | `config.json` | config snapshot with resolved seed and versions |
//! | `scenario.json` | the scenario as run |
//! | `trajectory.csv` | per-slot (MAC) or per-round, per-flow (TCP) log |
//! | `throughput.csv` | windowed per-node throughput (MAC) |
//! | `reference.csv` | oracle throughput per frame and node (MAC, when solvable) |
//! | `periods.csv` | one row per query period with the applied action |
//! | `metrics.json` | RMSE, α-fair sum and Jain index with their parameters |
//! | `strategies.json`, `episodes.json`, `demos.json`, `offline.json` | offline stage |
//! | `trace.json`, `trace.dot` | decision trace, when tracing is on |
//! | `transcript.jsonl` | every backend exchange |

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

pub use commands::{
    cmd_demos, cmd_eval, cmd_offline, cmd_oracle, cmd_run, cmd_run_replicas, cmd_trace, MetricsReport, OracleReport,
    RunOutcome, TraceFiles,
};
pub use config::{load_scenario, BackendSelection, RunConfig};
pub use error::CliError;
