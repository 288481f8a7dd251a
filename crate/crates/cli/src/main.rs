use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cpnet_cli::{
    cmd_demos, cmd_eval, cmd_offline, cmd_oracle, cmd_run_replicas, cmd_trace, BackendSelection, CliError, RunConfig,
};
use cpnet_core::agent::{AgentConfig, Family};
use cpnet_core::backend::HttpConfig;

#[derive(Parser)]
#[command(name = "cpnet", version, about = "Heterogeneous MAC/TCP experiments with strategy-programming agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Offline stage (unless --strategies is given), then the online run.
    Run(RunArgs),
    /// Oracle policy and reference trajectory of a MAC scenario.
    Oracle {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Demonstration sets for one family.
    Demos {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        agent: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Offline strategy generation and refinement.
    Offline {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        agent: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the metrics of a run directory.
    Eval {
        #[arg(long)]
        run: PathBuf,
        /// A reference.csv to compare against instead of the oracle.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Export the decision tree of a traced run.
    Trace {
        #[arg(long)]
        run: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Mac,
    Tcp,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Family {
        match f {
            FamilyArg::Mac => Family::Mac,
            FamilyArg::Tcp => Family::Tcp,
        }
    }
}

#[derive(Args)]
struct BackendArgs {
    /// Base URL of an OpenAI-compatible endpoint; the scripted backend is used without it.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value = "gpt-4o")]
    model: String,
}

impl BackendArgs {
    fn selection(&self) -> Option<BackendSelection> {
        self.endpoint.as_ref().map(|e| BackendSelection::Http(HttpConfig::new(e.clone(), self.model.clone())))
    }
}

#[derive(Args)]
struct RunArgs {
    /// A run configuration file; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Agent tunables as JSON; replaces the `agent` block of the config.
    #[arg(long)]
    agent: Option<PathBuf>,
    /// Reuse a strategy set and skip the offline stage.
    #[arg(long)]
    strategies: Option<PathBuf>,
    #[arg(long)]
    no_trace: bool,
    #[arg(long, default_value_t = 1)]
    replicas: u32,
    #[command(flatten)]
    backend: BackendArgs,
}

fn load_agent(path: Option<&PathBuf>) -> Result<AgentConfig, CliError> {
    match path {
        Some(p) => serde_json::from_str(&cpnet_cli::config::read_text(p)?).map_err(|e| CliError::invalid(p, e)),
        None => Ok(AgentConfig::default()),
    }
}

fn run_config(a: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => {
            let scenario = a.scenario.clone().ok_or_else(|| CliError::Config("--scenario or --config is required".into()))?;
            let out = a.out.clone().ok_or_else(|| CliError::Config("--out or --config is required".into()))?;
            RunConfig::new(scenario, out)
        }
    };
    if let Some(s) = &a.scenario {
        cfg.scenario = s.clone();
    }
    if let Some(o) = &a.out {
        cfg.output = o.clone();
    }
    if a.seed.is_some() {
        cfg.seed = a.seed;
    }
    if a.agent.is_some() {
        cfg.agent = load_agent(a.agent.as_ref())?;
    }
    if a.strategies.is_some() {
        cfg.strategies = a.strategies.clone();
    }
    if a.no_trace {
        cfg.agent.tracing = false;
    }
    if let Some(b) = a.backend.selection() {
        cfg.backend = b;
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) {
    // A closed pipe on stdout is not an error; the artifacts are on disk.
    let _ = writeln!(io::stdout().lock(), "{}", serde_json::to_string_pretty(value).expect("reports serialize"));
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = run_config(&args)?;
            for o in cmd_run_replicas(&cfg, args.replicas)? {
                eprintln!("run written to {}", o.dir.display());
                print_json(&o.metrics);
            }
        }
        Command::Oracle { scenario, out } => print_json(&cmd_oracle(&scenario, &out)?),
        Command::Demos { family, k, seed, agent, out } => {
            let demos = cmd_demos(family.into(), k, seed, &load_agent(agent.as_ref())?, &out)?;
            eprintln!("{} demonstration sets written to {}", demos.len(), out.display());
        }
        Command::Offline { family, seed, agent, backend, out } => {
            let selection = backend.selection().unwrap_or_default();
            let off = cmd_offline(family.into(), &selection, &load_agent(agent.as_ref())?, seed, &out)?;
            print_json(&off.rounds);
        }
        Command::Eval { run, reference } => print_json(&cmd_eval(&run, reference.as_deref())?),
        Command::Trace { run } => {
            let files = cmd_trace(&run)?;
            eprintln!("wrote {} and {}", files.json.display(), files.dot.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
