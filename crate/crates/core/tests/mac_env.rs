use std::collections::BTreeMap;

use cpnet_core::mac::{Environment, NodeConfig, NodeKind, ScenarioSpec, SlotOutcome, TrajectoryLog};
use proptest::prelude::*;

fn protocol_kind() -> impl Strategy<Value = NodeKind> {
    prop_oneof![
        (0.01..0.9f64).prop_map(|q| NodeKind::Aloha { q }),
        (1u32..8, 0u32..4).prop_map(|(window, max_stage)| NodeKind::Csma { window, max_stage }),
        (1u32..8).prop_map(|window| NodeKind::FwAloha { window }),
        (1u32..8, 0u32..4).prop_map(|(window, max_stage)| NodeKind::EbAloha { window, max_stage }),
    ]
}

fn population() -> impl Strategy<Value = Vec<NodeConfig>> {
    (
        prop::collection::vec(protocol_kind(), 1..5),
        prop::option::of(prop::collection::btree_set(0usize..10, 1..4)),
    )
        .prop_map(|(kinds, tdma)| {
            let mut nodes: Vec<NodeConfig> = kinds.into_iter().map(NodeConfig::new).collect();
            if let Some(slots) = tdma {
                nodes.push(NodeConfig::new(NodeKind::Tdma { slots: slots.into_iter().collect() }));
            }
            nodes
        })
}

fn run(spec: &ScenarioSpec) -> TrajectoryLog {
    let mut env = Environment::build(spec).unwrap();
    env.run_frames(spec.total_frames, |_| BTreeMap::new()).unwrap();
    env.into_log()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn slot_outcomes_match_reward_vectors(nodes in population(), frames in 20u64..120, seed in any::<u64>()) {
        let log = run(&ScenarioSpec::new(nodes, frames, seed));
        for e in &log.slots {
            let sum: u32 = log.reward_vector(e).iter().map(|&r| r as u32).sum();
            prop_assert!(sum <= 1);
            prop_assert_eq!(e.outcome == SlotOutcome::Success, sum == 1);
            prop_assert_eq!(e.outcome == SlotOutcome::Idle, e.transmitters.is_empty());
        }
    }

    #[test]
    fn identical_specs_give_identical_logs(nodes in population(), frames in 10u64..80, seed in any::<u64>()) {
        let spec = ScenarioSpec::new(nodes, frames, seed);
        prop_assert_eq!(run(&spec), run(&spec));
    }

    #[test]
    fn eb_window_stays_bounded_and_resets_on_success(
        window in 1u32..6,
        max_stage in 0u32..4,
        others in prop::collection::vec(0.05..0.6f64, 1..4),
        seed in any::<u64>(),
    ) {
        let mut nodes = vec![NodeConfig::new(NodeKind::EbAloha { window, max_stage })];
        nodes.extend(others.into_iter().map(|q| NodeConfig::new(NodeKind::Aloha { q })));
        let spec = ScenarioSpec::new(nodes, 200, seed);
        let mut env = Environment::build(&spec).unwrap();
        let cap = window << max_stage;
        for _ in 0..2000 {
            let r = env.step_slot(&BTreeMap::new()).unwrap();
            let b = env.node_state(0).unwrap().backoff().unwrap().clone();
            prop_assert!(b.current_window() <= cap);
            prop_assert!(b.counter < b.current_window());
            if r.outcome == SlotOutcome::Success && r.transmitters == [0] {
                prop_assert_eq!(b.current_window(), window);
            }
        }
    }

    #[test]
    fn events_do_not_rewrite_the_past(nodes in population(), event in 5u64..40, seed in any::<u64>()) {
        let frames = 60;
        let with_join = |join: u64| {
            let mut n = nodes.clone();
            n.push(NodeConfig::new(NodeKind::Aloha { q: 0.3 }).joining(join));
            ScenarioSpec::new(n, frames, seed)
        };
        let early = run(&with_join(event));
        let late = run(&with_join(frames - 1));
        let fl = early.frame_len;
        prop_assert_eq!(&early.slots[..event as usize * fl], &late.slots[..event as usize * fl]);
    }
}

#[test]
fn lone_tdma_throughput_is_exact() {
    for slots in [vec![3, 5], vec![0], vec![1, 2, 3, 4, 9]] {
        let k = slots.len();
        let log = run(&ScenarioSpec::new(vec![NodeConfig::new(NodeKind::Tdma { slots })], 1000, 7));
        let wins = log.slots.iter().filter(|e| e.winner() == Some(0)).count();
        assert_eq!(wins, 1000 * k);
    }
}

#[test]
fn aloha_transmission_rate_converges_to_q() {
    for (i, q) in [0.05, 0.2, 0.5, 0.8].into_iter().enumerate() {
        let log = run(&ScenarioSpec::new(vec![NodeConfig::new(NodeKind::Aloha { q })], 10_000, i as u64));
        let n = log.slots.len() as f64;
        let tx = log.slots.iter().filter(|e| e.transmitted(0)).count() as f64;
        let sigma = (n * q * (1.0 - q)).sqrt();
        assert!((tx - n * q).abs() <= 3.0 * sigma, "q={q}: {tx} of {n}");
    }
}
