//! The online stage. The strategy set is read-only and episodic memory is
//! frozen; only the observer, node agent and assistant act.

use super::controller::{run_mac, run_tcp, Decider, Decision, DecisionInput, MacRun, NodeAgentDecider, RunOptions, TcpRun};
use super::memory::{EpisodicMemory, StrategySet, TrajectoryMemory};
use super::observer::ObserverReport;
use super::{AgentConfig, AgentError};
use crate::backend::CompletionBackend;
use crate::mac::ScenarioSpec;
use crate::rng::Rng;
use crate::strategy::{ActionSpace, PolicyVector, Signals};
use crate::tcp::TcpScenarioSpec;

/// A single node-agent decision outside a full run.
#[allow(clippy::too_many_arguments)]
pub fn online_decide(
    set: &StrategySet,
    trajectory: &TrajectoryMemory,
    report: Option<&ObserverReport>,
    signals: &Signals,
    space: ActionSpace,
    previous: Option<&PolicyVector>,
    backend: &dyn CompletionBackend,
    cfg: &AgentConfig,
    rng: &mut Rng,
) -> Result<Decision, AgentError> {
    let mut d = NodeAgentDecider::new(set, backend, backend, cfg);
    for p in trajectory.entries() {
        d.observe(0, p);
    }
    let input = DecisionInput { agent: 0, period: 0, start: 0, report, signals, space, previous };
    d.decide(&input, rng)
}

fn check_set(set: &StrategySet) -> Result<(), AgentError> {
    if set.is_empty() {
        return Err(AgentError::Precondition("the online stage needs at least one strategy".into()));
    }
    Ok(())
}

/// Runs `spec` with the node agent choosing from `set` every query period.
pub fn run_online_mac(
    spec: &ScenarioSpec,
    set: &StrategySet,
    memory: &mut EpisodicMemory,
    backend: &dyn CompletionBackend,
    cfg: &AgentConfig,
    seed: u64,
) -> Result<MacRun, AgentError> {
    check_set(set)?;
    memory.freeze();
    let mut decider = NodeAgentDecider::new(set, backend, backend, cfg);
    run_mac(spec, &mut decider, cfg, &RunOptions { perturb: true, tracing: cfg.tracing, seed })
}

pub fn run_online_tcp(
    spec: &TcpScenarioSpec,
    set: &StrategySet,
    memory: &mut EpisodicMemory,
    backend: &dyn CompletionBackend,
    cfg: &AgentConfig,
    seed: u64,
) -> Result<TcpRun, AgentError> {
    check_set(set)?;
    memory.freeze();
    let mut decider = NodeAgentDecider::new(set, backend, backend, cfg);
    run_tcp(spec, &mut decider, cfg, &RunOptions { perturb: true, tracing: cfg.tracing, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendError, ScriptedBackend, SequenceBackend};
    use crate::mac::{NodeConfig, NodeKind};
    use crate::rng::stream;
    use crate::strategy::{Effect, Explore, Provenance, Rule, Strategy, Trigger};

    fn avoid() -> Strategy {
        Strategy::new(
            PolicyVector::Probs(vec![0.5; 10]),
            vec![
                Rule { when: Trigger::Always, then: Effect::ContentionShare },
                Rule {
                    when: Trigger::SlotUtilizationAtLeast { threshold: 0.9, slots: None },
                    then: Effect::AvoidSlots { slots: None },
                },
            ],
            Explore { epsilon: 0.02, sigma: 0.05 },
            Provenance::Refined,
        )
    }

    fn set_of(s: Strategy) -> StrategySet {
        let mut set = StrategySet::new();
        set.insert(s);
        set
    }

    #[test]
    fn overused_slots_get_zero_probability() {
        let mut util = vec![0.0; 10];
        util[3] = 1.0;
        util[5] = 1.0;
        let signals = Signals { utilization: Some(util), perturb: true, ..Default::default() };
        let d = online_decide(
            &set_of(avoid()),
            &TrajectoryMemory::new(3),
            None,
            &signals,
            ActionSpace::Mac { frame_len: 10 },
            None,
            &ScriptedBackend,
            &AgentConfig::default(),
            &mut stream(0, 0),
        )
        .unwrap();
        let p = d.action.probs().unwrap();
        assert_eq!((p[3], p[5]), (0.0, 0.0));
        assert!(d.queried);
    }

    #[test]
    fn outage_reuses_the_previous_action() {
        let backend = SequenceBackend::with_results(vec![Err(BackendError::Unavailable { status: None, message: "down".into() })]);
        let prev = PolicyVector::Probs(vec![0.25; 10]);
        let d = online_decide(
            &set_of(avoid()),
            &TrajectoryMemory::new(3),
            None,
            &Signals::default(),
            ActionSpace::Mac { frame_len: 10 },
            Some(&prev),
            &backend,
            &AgentConfig::default(),
            &mut stream(0, 0),
        )
        .unwrap();
        assert!(d.fallback);
        assert_eq!(d.action, prev);
    }

    #[test]
    fn online_stage_does_not_write_episodic_memory() {
        let spec = ScenarioSpec::new(
            vec![NodeConfig::new(NodeKind::Tdma { slots: vec![3, 5] }), NodeConfig::new(NodeKind::Agent)],
            300,
            4,
        );
        let mut memory = EpisodicMemory::default();
        let run = run_online_mac(&spec, &set_of(avoid()), &mut memory, &ScriptedBackend, &AgentConfig::default(), 1).unwrap();
        assert!(memory.is_frozen());
        assert_eq!(memory.writes(), 0);
        let last = run.periods.last().unwrap();
        assert!(last.findings.iter().any(|f| f == "slots 3,5 utilization 1.0 (overused)"), "{:?}", last.findings);
    }
}
