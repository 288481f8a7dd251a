use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cpnet_cli::artifacts::{read_mac_trajectory, read_tcp_trajectory, write_mac_trajectory, write_tcp_trajectory};
use cpnet_cli::{cmd_eval, cmd_run, cmd_run_replicas, cmd_trace, CliError, RunConfig};
use cpnet_core::mac::{Environment, NodeConfig, NodeKind, ScenarioSpec};
use cpnet_core::tcp::{Controller, TcpEnvironment, TcpScenarioSpec};
use proptest::prelude::*;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cpnet-cli-{}-{tag}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn cpnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpnet")).args(args).output().unwrap()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap_or("{}");
    serde_json::from_str(line).unwrap()
}

#[test]
fn missing_scenario_exits_with_2() {
    let out = cpnet(&["run", "--scenario", "/nonexistent/scenario.json", "--out", "/tmp/never"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "missing_file");
    assert_eq!(err["exit_code"], 2);
}

#[test]
fn oracle_refuses_sensing_populations_with_4() {
    let dir = scratch("csma-oracle");
    let out = cpnet(&["oracle", "--scenario", scenario("csma-agent.json").to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_json(&out)["exit_code"], 4);
}

#[test]
fn oracle_writes_policy_and_reference() {
    let dir = scratch("tdma-oracle");
    let out = cpnet(&["oracle", "--scenario", scenario("tdma-agent.json").to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["segments"].as_array().unwrap().len(), 1);
    assert!(dir.join("oracle.json").exists());
    assert!(dir.join("reference.csv").exists());
}

#[test]
fn untraced_run_cannot_be_exported() {
    let dir = scratch("untraced");
    let out = cpnet(&[
        "run",
        "--scenario",
        scenario("tdma-agent.json").to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
        "--no-trace",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(metrics["domain"], "mac");
    let out = cpnet(&["trace", "--run", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(matches!(cmd_trace(&dir), Err(CliError::TracingDisabled { .. })));
}

#[test]
fn eval_of_an_empty_directory_is_a_missing_artifact() {
    let dir = scratch("empty");
    fs::create_dir_all(&dir).unwrap();
    assert_eq!(cpnet(&["eval", "--run", dir.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn eval_reproduces_the_run_metrics() {
    for name in ["aloha2-agent.json", "reno-agent.json"] {
        let dir = scratch(&format!("eval-{name}"));
        let run = cmd_run(&RunConfig::new(scenario(name), &dir)).unwrap();
        let again = cmd_eval(&dir, None).unwrap();
        assert_eq!(again, run.metrics, "{name}");
        assert_eq!(fs::read_to_string(dir.join("eval.json")).unwrap(), fs::read_to_string(dir.join("metrics.json")).unwrap());
    }
}

#[test]
fn seed_override_changes_the_run_and_is_recorded() {
    let base = cmd_run(&RunConfig::new(scenario("tdma-agent.json"), scratch("seed-base"))).unwrap();
    let mut cfg = RunConfig::new(scenario("tdma-agent.json"), scratch("seed-42"));
    cfg.seed = Some(42);
    let other = cmd_run(&cfg).unwrap();
    assert_eq!(base.seed, 5);
    assert_eq!(other.seed, 42);
    let snap: serde_json::Value = serde_json::from_str(&fs::read_to_string(other.dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(snap["seed"], 42);
    let scen: serde_json::Value = serde_json::from_str(&fs::read_to_string(other.dir.join("scenario.json")).unwrap()).unwrap();
    assert_eq!(scen["seed"], 42);
    assert_ne!(fs::read(base.dir.join("trajectory.csv")).unwrap(), fs::read(other.dir.join("trajectory.csv")).unwrap());
}

#[test]
fn replicas_use_consecutive_seeds() {
    let dir = scratch("replicas");
    let outs = cmd_run_replicas(&RunConfig::new(scenario("tdma-agent.json"), &dir), 3).unwrap();
    let seeds: Vec<u64> = outs.iter().map(|o| o.seed).collect();
    assert_eq!(seeds, [5, 6, 7]);
    for r in 0..3 {
        assert!(dir.join(format!("replica-{r}")).join("metrics.json").exists());
    }
}

#[test]
fn cached_strategies_skip_the_offline_stage() {
    let first = cmd_run(&RunConfig::new(scenario("tdma-agent.json"), scratch("cache-a"))).unwrap();
    let mut cfg = RunConfig::new(scenario("tdma-agent.json"), scratch("cache-b"));
    cfg.strategies = Some(first.dir.join("strategies.json"));
    let second = cmd_run(&cfg).unwrap();
    assert!(!second.dir.join("offline.json").exists());
    assert_eq!(fs::read(first.dir.join("trajectory.csv")).unwrap(), fs::read(second.dir.join("trajectory.csv")).unwrap());

    let mut wrong = RunConfig::new(scenario("reno-agent.json"), scratch("cache-c"));
    wrong.strategies = cfg.strategies.clone();
    assert!(matches!(cmd_run(&wrong), Err(CliError::Config(_))));
}

fn mac_population() -> impl Strategy<Value = Vec<NodeConfig>> {
    let kind = prop_oneof![
        (0.05..0.8f64).prop_map(|q| NodeKind::Aloha { q }),
        prop::collection::btree_set(0usize..10, 1..4).prop_map(|s| NodeKind::Tdma { slots: s.into_iter().collect() }),
        (1u32..6, 0u32..3).prop_map(|(window, max_stage)| NodeKind::EbAloha { window, max_stage }),
    ];
    (prop::collection::vec(kind, 1..4), prop::option::of(5u64..30)).prop_map(|(kinds, join)| {
        let mut nodes: Vec<NodeConfig> = kinds.into_iter().map(NodeConfig::new).collect();
        if let Some(j) = join {
            nodes.push(NodeConfig::new(NodeKind::Aloha { q: 0.4 }).joining(j));
        }
        nodes
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mac_trajectory_survives_csv(nodes in mac_population(), seed in any::<u64>()) {
        let spec = ScenarioSpec::new(nodes, 40, seed);
        let mut env = Environment::build(&spec).unwrap();
        env.run_frames(spec.total_frames, |_| BTreeMap::new()).unwrap();
        let log = env.into_log();
        let path = scratch(&format!("mac-csv-{seed}")).with_extension("csv");
        write_mac_trajectory(&path, &log).unwrap();
        let back = read_mac_trajectory(&path, &spec).unwrap();
        let _ = fs::remove_file(&path);
        prop_assert_eq!(back, log);
    }

    #[test]
    fn tcp_trajectory_survives_csv(
        controllers in prop::collection::vec(prop_oneof![Just(Controller::Reno), Just(Controller::Vegas)], 1..4),
        seed in any::<u64>(),
    ) {
        let spec = TcpScenarioSpec::from_controllers(&controllers, 120, seed);
        let mut env = TcpEnvironment::build(&spec).unwrap();
        for _ in 0..spec.total_rounds {
            env.step_round(&BTreeMap::new()).unwrap();
        }
        let path = scratch(&format!("tcp-csv-{seed}")).with_extension("csv");
        write_tcp_trajectory(&path, env.log()).unwrap();
        let back = read_tcp_trajectory(&path).unwrap();
        let _ = fs::remove_file(&path);
        prop_assert_eq!(back, env.log().to_vec());
    }
}
