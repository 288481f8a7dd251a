use std::collections::BTreeMap;

use cpnet_core::metrics::jain_index;
use cpnet_core::tcp::{mean_throughputs, Controller, FlowConfig, RoundEntry, TcpEnvironment, TcpScenarioSpec};
use proptest::prelude::*;

fn run(spec: &TcpScenarioSpec, agent_cwnd: impl Fn(u64) -> u32) -> Vec<RoundEntry> {
    let mut env = TcpEnvironment::build(spec).unwrap();
    let agents = spec.agent_ids();
    for r in 0..spec.total_rounds {
        let live = spec.live_at(r);
        let overrides: BTreeMap<u32, u32> =
            agents.iter().filter(|id| live.contains(id)).map(|&id| (id, agent_cwnd(r))).collect();
        env.step_round(&overrides).unwrap();
    }
    env.log().to_vec()
}

fn flows() -> impl Strategy<Value = Vec<FlowConfig>> {
    let controller = prop_oneof![Just(Controller::Reno), Just(Controller::Vegas), Just(Controller::Agent)];
    prop::collection::vec((controller, 0u64..50, prop::option::of(50u64..150)), 1..5).prop_map(|v| {
        v.into_iter()
            .map(|(c, join, leave)| {
                let f = FlowConfig::new(c).joining(join);
                match leave {
                    Some(l) => f.leaving(l),
                    None => f,
                }
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn packets_are_conserved_and_rtt_tracks_the_queue(
        flows in flows(),
        buffer in prop::option::of(1.0..40.0f64),
        seed in any::<u64>(),
        cwnds in prop::collection::vec(1u32..=64, 16),
    ) {
        let mut spec = TcpScenarioSpec::new(flows, 200, seed);
        spec.buffer = buffer;
        let log = run(&spec, |r| cwnds[r as usize % cwnds.len()]);
        for e in &log {
            let sent: f64 = e.flows.values().map(|f| f.cwnd).sum();
            let out: f64 = e.flows.values().map(|f| f.acks + f.drops).sum();
            prop_assert!((sent - out).abs() <= 1e-9 * sent.max(1.0), "round {}: {} vs {}", e.round, sent, out);
            for f in e.flows.values() {
                prop_assert!(f.rtt >= spec.base_rtt);
                prop_assert_eq!(f.rtt == spec.base_rtt, e.queue == 0.0);
            }
        }
    }
}

fn jain_last_half(controllers: &[Controller]) -> f64 {
    let spec = TcpScenarioSpec::from_controllers(controllers, 2000, 1);
    let log = run(&spec, |_| 1);
    let xs: Vec<f64> = mean_throughputs(&log, 1000, 2000).into_values().collect();
    jain_index(&xs).unwrap()
}

#[test]
fn homogeneous_pairs_share_fairly() {
    assert!(jain_last_half(&[Controller::Reno, Controller::Reno]) >= 0.99);
    assert!(jain_last_half(&[Controller::Vegas, Controller::Vegas]) >= 0.99);
}

#[test]
fn reno_crowds_out_vegas() {
    let j = jain_last_half(&[Controller::Reno, Controller::Vegas]);
    assert!(j < 0.9, "{j}");
}
