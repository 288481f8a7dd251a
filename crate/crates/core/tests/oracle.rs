use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use cpnet_core::mac::{Environment, NodeConfig, NodeKind, ScenarioSpec};
use cpnet_core::metrics::alpha_fair_value;
use cpnet_core::oracle::{expected_throughputs, solve_aware, solve_aware_scaled, Population};
use cpnet_core::rng::stream;
use proptest::prelude::*;
use rand::Rng;

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

#[test]
fn one_aloha_gives_half() {
    let (sol, dt) = timed(|| solve_aware(&Population::new(vec![0.2], vec![], 1, 10), 1.0).unwrap());
    assert!(dt < Duration::from_secs(5));
    for &p in &sol.policies[0] {
        assert!((p - 0.5).abs() <= 1e-3, "{p}");
    }
    // x_H = p(1-q), x_A = q(1-p); ln-sum is maximised at p = 1/2 for any q.
    let expect = [0.5 * 0.8, 0.2 * 0.5];
    for (x, e) in sol.expected_throughputs.iter().zip(expect) {
        assert!((x - e).abs() < 1e-3);
    }
}

#[test]
fn one_tdma_leaves_its_slots_alone() {
    let (sol, dt) = timed(|| solve_aware(&Population::new(vec![], vec![vec![3, 5]], 1, 10), 1.0).unwrap());
    assert!(dt < Duration::from_secs(5));
    let want: Vec<f64> = (0..10).map(|k| if k == 3 || k == 5 { 0.0 } else { 1.0 }).collect();
    assert_eq!(sol.policies[0], want);
    assert_eq!(sol.expected_throughputs, vec![0.8, 0.2]);
}

#[test]
fn mixed_population_is_piecewise() {
    let pop = Population::new(vec![0.2; 3], vec![vec![3, 5]], 1, 10);
    let sol = solve_aware(&pop, 1.0).unwrap();
    let p = &sol.policies[0];
    assert_eq!((p[3], p[5]), (0.0, 0.0));
    // Only the total over free slots matters; ln-sum optimum is a mean of 1/4.
    let free: f64 = [0, 1, 2, 4, 6, 7, 8, 9].iter().map(|&k| p[k]).sum();
    assert!((free / 8.0 - 0.25).abs() < 1e-3, "{p:?}");
    let flat: Vec<f64> = (0..10).map(|k| if k == 3 || k == 5 { 0.0 } else { 0.25 }).collect();
    let flat = expected_throughputs(&[flat], &pop).unwrap();
    for (x, y) in sol.expected_throughputs.iter().zip(&flat) {
        assert!((x - y).abs() < 1e-3);
    }
}

/// Random ALOHA/TDMA population with 1–2 controlled nodes and fixed random
/// policies for them.
fn random_case(seed: u64) -> (Population, Vec<Vec<f64>>) {
    let mut rng = stream(seed, 0);
    let frame_len = 10;
    let n_aloha = rng.random_range(0..=3);
    let aloha: Vec<f64> = (0..n_aloha).map(|_| rng.random_range(0.05..0.5)).collect();
    let mut free: Vec<usize> = (0..frame_len).collect();
    let mut tdma = Vec::new();
    for _ in 0..rng.random_range(0..=2) {
        let mut slots = Vec::new();
        for _ in 0..rng.random_range(1..=3) {
            if free.is_empty() {
                break;
            }
            slots.push(free.remove(rng.random_range(0..free.len())));
        }
        if !slots.is_empty() {
            slots.sort_unstable();
            tdma.push(slots);
        }
    }
    let agents = rng.random_range(1..=2);
    let policies = (0..agents).map(|_| (0..frame_len).map(|_| rng.random::<f64>()).collect()).collect();
    (Population::new(aloha, tdma, agents, frame_len), policies)
}

fn spec_for(pop: &Population, frames: u64, seed: u64) -> ScenarioSpec {
    let mut nodes: Vec<NodeConfig> = (0..pop.agents).map(|_| NodeConfig::new(NodeKind::Aware)).collect();
    nodes.extend(pop.aloha.iter().map(|&q| NodeConfig::new(NodeKind::Aloha { q })));
    nodes.extend(pop.tdma.iter().map(|s| NodeConfig::new(NodeKind::Tdma { slots: s.clone() })));
    ScenarioSpec::new(nodes, frames, seed)
}

#[test]
fn expected_throughputs_match_simulation() {
    let frames = 10_000u64;
    for case in 0..5u64 {
        let (pop, policies) = random_case(100 + case);
        let expected = expected_throughputs(&policies, &pop).unwrap();
        let spec = spec_for(&pop, frames, case);
        let mut env = Environment::build(&spec).unwrap();
        env.run_frames(frames, |e| {
            let k = e.frame_position();
            policies.iter().enumerate().map(|(i, p)| (i as u32, p[k])).collect::<BTreeMap<_, _>>()
        })
        .unwrap();
        let log = env.into_log();
        let n = log.slots.len() as f64;
        assert_eq!(n, 1e5);
        for (id, &x) in expected.iter().enumerate() {
            let wins = log.slots.iter().filter(|s| s.winner() == Some(id as u32)).count() as f64;
            let sigma = (n * x * (1.0 - x)).sqrt();
            assert!(
                (wins - n * x).abs() <= 3.0 * sigma.max(1e-9),
                "case {case} node {id}: {wins} wins vs {} expected (σ {sigma:.1})",
                n * x
            );
        }
    }
}

fn objective(pop: &Population, policies: &[Vec<f64>]) -> f64 {
    let x = expected_throughputs(policies, pop).unwrap();
    alpha_fair_value(&x, 1.0).unwrap_or(f64::NEG_INFINITY)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn solution_dominates_flat_baselines(seed in any::<u64>()) {
        let (pop, _) = random_case(seed);
        let sol = solve_aware(&pop, 1.0).unwrap();
        let owned: Vec<usize> = pop.tdma.iter().flatten().copied().collect();
        for step in 0..=20 {
            let level = step as f64 / 20.0;
            for respect_tdma in [false, true] {
                let p: Vec<f64> = (0..pop.frame_len)
                    .map(|k| if respect_tdma && owned.contains(&k) { 0.0 } else { level })
                    .collect();
                let base = objective(&pop, &vec![p; pop.agents]);
                prop_assert!(sol.objective >= base - 1e-9, "{} < {} at level {}", sol.objective, base, level);
            }
        }
        prop_assert!((objective(&pop, &sol.policies) - sol.objective).abs() < 1e-9);
    }

    /// Optima can be flat (only the sum over free slots matters for a lone
    /// agent), so the comparison is on achieved throughputs.
    #[test]
    fn argmax_ignores_the_utility_scale(seed in any::<u64>()) {
        let (pop, _) = random_case(seed);
        let a = solve_aware_scaled(&pop, 1.0, 1.0).unwrap();
        let b = solve_aware_scaled(&pop, 1.0, 100.0).unwrap();
        for (xa, xb) in a.expected_throughputs.iter().zip(&b.expected_throughputs) {
            prop_assert!((xa - xb).abs() < 1e-6, "{} vs {}", xa, xb);
        }
        prop_assert!((a.objective - b.objective).abs() < 1e-6 || a.objective == b.objective);
    }
}
