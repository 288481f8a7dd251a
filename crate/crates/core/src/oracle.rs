//! The AWARE reference: α-fair optimal per-slot transmission probabilities for
//! nodes with full knowledge of an ALOHA/TDMA population, and the reference
//! throughput trajectory derived from it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mac::{NodeKind, ScenarioSpec};
use crate::metrics::{alpha_fair_value, ReferenceSeries, UTILITY_SCALE};
use crate::NodeId;

/// Initial grid step of the coordinate ascent.
pub const INITIAL_STEP: f64 = 0.1;
/// The ascent stops once the step falls below this.
pub const MIN_STEP: f64 = 1e-3;
const MAX_SWEEPS_PER_STEP: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("unsupported population in segment {segment} (from frame {start_frame}): {reason}")]
    UnsupportedPopulation { segment: usize, start_frame: u64, reason: String },
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
}

/// An ALOHA/TDMA population plus the nodes under oracle control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub aloha: Vec<f64>,
    pub tdma: Vec<Vec<usize>>,
    pub agents: usize,
    pub frame_len: usize,
}

impl Population {
    pub fn new(aloha: Vec<f64>, tdma: Vec<Vec<usize>>, agents: usize, frame_len: usize) -> Self {
        Population { aloha, tdma, agents, frame_len }
    }

    /// Number of TDMA nodes owning each frame position.
    pub fn tdma_owners(&self) -> Vec<usize> {
        let mut owners = vec![0; self.frame_len];
        for slots in &self.tdma {
            for &s in slots {
                owners[s] += 1;
            }
        }
        owners
    }

    /// Extracts the population formed by `live` nodes of a scenario. The
    /// returned ids follow the throughput order: agents, ALOHA, then TDMA.
    pub fn from_scenario(spec: &ScenarioSpec, live: &[NodeId]) -> Result<(Self, Vec<NodeId>), String> {
        let mut agents = Vec::new();
        let mut aloha = Vec::new();
        let mut tdma = Vec::new();
        for &id in live {
            match &spec.nodes[id as usize].kind {
                NodeKind::Agent | NodeKind::Aware => agents.push(id),
                NodeKind::Aloha { q } => aloha.push((id, *q)),
                NodeKind::Tdma { slots } => tdma.push((id, slots.clone())),
                other => {
                    return Err(format!("node {id} is {}, which has no closed-form model", other.short_name()))
                }
            }
        }
        let mut ids = agents.clone();
        ids.extend(aloha.iter().map(|(id, _)| *id));
        ids.extend(tdma.iter().map(|(id, _)| *id));
        let pop = Population {
            aloha: aloha.into_iter().map(|(_, q)| q).collect(),
            tdma: tdma.into_iter().map(|(_, s)| s).collect(),
            agents: agents.len(),
            frame_len: spec.frame_len,
        };
        Ok((pop, ids))
    }
}

/// Result of [`solve_aware`]. `expected_throughputs` lists agents first, then
/// ALOHA nodes, then TDMA nodes, each in population order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OraclePolicy {
    pub policies: Vec<Vec<f64>>,
    pub objective: f64,
    pub expected_throughputs: Vec<f64>,
    pub alpha: f64,
}

/// Exact per-node throughputs of independent per-slot transmissions.
pub fn expected_throughputs(policies: &[Vec<f64>], pop: &Population) -> Result<Vec<f64>, OracleError> {
    if policies.len() != pop.agents {
        return Err(OracleError::InvalidPolicy(format!(
            "{} policies for {} agents",
            policies.len(),
            pop.agents
        )));
    }
    for (i, p) in policies.iter().enumerate() {
        if p.len() != pop.frame_len {
            return Err(OracleError::InvalidPolicy(format!("policy {i} has length {}", p.len())));
        }
        if let Some(k) = p.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(OracleError::InvalidPolicy(format!("policy {i} slot {k} is {}", p[k])));
        }
    }
    Ok(throughputs_unchecked(policies, pop, &pop.tdma_owners()))
}

fn throughputs_unchecked(policies: &[Vec<f64>], pop: &Population, owners: &[usize]) -> Vec<f64> {
    let n_agents = policies.len();
    let mut x = vec![0.0; n_agents + pop.aloha.len() + pop.tdma.len()];
    let silent_except = |probs: &[f64], skip: usize| -> f64 {
        probs.iter().enumerate().filter(|(j, _)| *j != skip).map(|(_, p)| 1.0 - p).product()
    };
    let frame = pop.frame_len as f64;
    for k in 0..pop.frame_len {
        let agent_p: Vec<f64> = policies.iter().map(|p| p[k]).collect();
        let all_agents_silent = silent_except(&agent_p, usize::MAX);
        let all_aloha_silent = silent_except(&pop.aloha, usize::MAX);
        if owners[k] == 0 {
            for i in 0..n_agents {
                x[i] += agent_p[i] * silent_except(&agent_p, i) * all_aloha_silent;
            }
            for (a, q) in pop.aloha.iter().enumerate() {
                x[n_agents + a] += q * silent_except(&pop.aloha, a) * all_agents_silent;
            }
        } else if owners[k] == 1 {
            let t = pop.tdma.iter().position(|s| s.contains(&k)).expect("owner exists");
            x[n_agents + pop.aloha.len() + t] += all_aloha_silent * all_agents_silent;
        }
    }
    x.iter_mut().for_each(|v| *v /= frame);
    x
}

fn objective_of(x: &[f64], alpha: f64, scale: f64) -> f64 {
    let mut total = 0.0;
    for &v in x {
        let s = scale * v;
        if alpha == 1.0 {
            if s <= 0.0 {
                return f64::NEG_INFINITY;
            }
            total += s.ln();
        } else {
            if s <= 0.0 && alpha > 1.0 {
                return f64::NEG_INFINITY;
            }
            total += s.powf(1.0 - alpha) / (1.0 - alpha);
        }
    }
    total
}

fn starts(pop: &Population, owners: &[usize]) -> Vec<Vec<Vec<f64>>> {
    let free: Vec<bool> = owners.iter().map(|&o| o == 0).collect();
    let n = pop.agents;
    let level = 1.0 / (pop.aloha.len() + n) as f64;
    let on_free = |v: f64| -> Vec<f64> { free.iter().map(|&f| if f { v } else { 0.0 }).collect() };
    let contention = vec![on_free(level); n];
    let uniform = vec![vec![0.5; pop.frame_len]; n];
    let all_one = vec![on_free(1.0); n];
    let mut partition = vec![vec![0.0; pop.frame_len]; n];
    for (j, k) in (0..pop.frame_len).filter(|&k| free[k]).enumerate() {
        partition[j % n][k] = 1.0;
    }
    let mut out: Vec<Vec<Vec<f64>>> = Vec::new();
    for s in [contention, uniform, all_one, partition] {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

/// Coordinate ascent with grid halving from one starting point.
fn ascend(mut p: Vec<Vec<f64>>, pop: &Population, owners: &[usize], alpha: f64, scale: f64) -> (Vec<Vec<f64>>, f64) {
    let eval = |p: &[Vec<f64>]| objective_of(&throughputs_unchecked(p, pop, owners), alpha, scale);
    let mut best = eval(&p);
    let mut step = INITIAL_STEP;
    while step >= MIN_STEP {
        for _ in 0..MAX_SWEEPS_PER_STEP {
            let mut improved = false;
            for i in 0..p.len() {
                for k in 0..pop.frame_len {
                    let current = p[i][k];
                    let mut chosen = current;
                    for cand in [current - step, current + step, 0.0, 1.0] {
                        let cand = cand.clamp(0.0, 1.0);
                        if cand == chosen {
                            continue;
                        }
                        p[i][k] = cand;
                        let v = eval(&p);
                        if v > best + 1e-12 * best.abs().max(1.0) {
                            best = v;
                            chosen = cand;
                        }
                    }
                    p[i][k] = chosen;
                    improved |= chosen != current;
                }
            }
            if !improved {
                break;
            }
        }
        step /= 2.0;
    }
    (p, best)
}

/// Maximizes `Σ g_α(100·x_i)` over the agents' per-slot probabilities.
pub fn solve_aware(pop: &Population, alpha: f64) -> Result<OraclePolicy, OracleError> {
    solve_aware_scaled(pop, alpha, UTILITY_SCALE)
}

/// [`solve_aware`] with an explicit throughput scale inside the utility.
pub fn solve_aware_scaled(pop: &Population, alpha: f64, scale: f64) -> Result<OraclePolicy, OracleError> {
    if pop.frame_len == 0 {
        return Err(OracleError::InvalidPolicy("frame_len is zero".into()));
    }
    if let Some(s) = pop.tdma.iter().flatten().find(|&&s| s >= pop.frame_len) {
        return Err(OracleError::InvalidPolicy(format!("TDMA slot {s} outside the frame")));
    }
    if let Some(q) = pop.aloha.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(OracleError::InvalidPolicy(format!("ALOHA probability {q}")));
    }
    let owners = pop.tdma_owners();
    let mut best: Option<(Vec<Vec<f64>>, f64)> = None;
    if pop.agents == 0 {
        best = Some((Vec::new(), 0.0));
    } else {
        for start in starts(pop, &owners) {
            let (p, v) = ascend(start, pop, &owners, alpha, scale);
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((p, v));
            }
        }
    }
    let (policies, _) = best.expect("at least one start");
    let expected_throughputs = throughputs_unchecked(&policies, pop, &owners);
    let objective = alpha_fair_value(&expected_throughputs, alpha).unwrap_or(f64::NEG_INFINITY);
    Ok(OraclePolicy { policies, objective, expected_throughputs, alpha })
}

/// Oracle solution for one population segment of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentOracle {
    pub start_frame: u64,
    pub end_frame: u64,
    pub label: String,
    /// Node ids in the order of `policy.expected_throughputs`.
    pub ids: Vec<NodeId>,
    pub policy: OraclePolicy,
}

impl SegmentOracle {
    /// Oracle policy of an agent node, if it is one of this segment's agents.
    pub fn policy_for(&self, node: NodeId) -> Option<&[f64]> {
        self.ids[..self.policy.policies.len()]
            .iter()
            .position(|&id| id == node)
            .map(|i| self.policy.policies[i].as_slice())
    }

    pub fn throughput_of(&self, node: NodeId) -> Option<f64> {
        self.ids.iter().position(|&id| id == node).map(|i| self.policy.expected_throughputs[i])
    }
}

/// Piecewise-constant reference for a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AwareTrajectory {
    pub segments: Vec<SegmentOracle>,
    pub reference: ReferenceSeries,
}

/// Solves every population segment of `spec` (α = 1) and expands the
/// expected throughputs into a per-frame reference series.
pub fn aware_trajectory(spec: &ScenarioSpec) -> Result<AwareTrajectory, OracleError> {
    let mut segments = Vec::new();
    for (index, (start, end, live)) in spec.segments().into_iter().enumerate() {
        let (pop, ids) = Population::from_scenario(spec, &live).map_err(|reason| {
            OracleError::UnsupportedPopulation { segment: index, start_frame: start, reason }
        })?;
        let policy = solve_aware(&pop, 1.0)?;
        segments.push(SegmentOracle {
            start_frame: start,
            end_frame: end,
            label: spec.population_label(&live),
            ids,
            policy,
        });
    }
    let nodes: Vec<NodeId> = (0..spec.nodes.len() as NodeId)
        .filter(|id| segments.iter().any(|s| s.ids.contains(id)))
        .collect();
    let mut values = vec![vec![None; spec.total_frames as usize]; nodes.len()];
    for seg in &segments {
        for (n, &node) in nodes.iter().enumerate() {
            if let Some(x) = seg.throughput_of(node) {
                for f in seg.start_frame..seg.end_frame {
                    values[n][f as usize] = Some(x);
                }
            }
        }
    }
    Ok(AwareTrajectory { segments, reference: ReferenceSeries { nodes, values } })
}
