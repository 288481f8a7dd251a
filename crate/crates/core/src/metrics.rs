//! Throughput windows, α-fairness, Jain's index, RMSE against a reference and
//! slot utilization.
//!
//! Throughputs in the α-fair objective are scaled by 100 before the utility
//! is applied, which keeps `ln` positive for realistic per-slot success rates.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mac::TrajectoryLog;
use crate::NodeId;

/// Scale applied to throughputs inside the α-fair utility.
pub const UTILITY_SCALE: f64 = 100.0;
/// Floor applied to throughputs before the log utility by callers that must
/// not fail on starved nodes.
pub const THROUGHPUT_FLOOR: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("log contains no complete frame")]
    EmptyLog,
    #[error("window must be at least one frame")]
    EmptyWindow,
    #[error("throughput {value} of entry {index} is outside the utility's domain for alpha = {alpha}")]
    Domain { index: usize, value: f64, alpha: f64 },
    #[error("all throughputs are zero")]
    AllZero,
    #[error("no throughputs given")]
    NoInput,
    #[error("series and reference are misaligned: {0}")]
    Misaligned(String),
    #[error("csv output failed: {0}")]
    Csv(String),
}

/// Per-node windowed success rates. `values[n][i]` belongs to node `nodes[n]`
/// and the window ending at frame `first_frame + i` (inclusive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputSeries {
    pub window: u64,
    pub frame_len: usize,
    pub first_frame: u64,
    pub nodes: Vec<NodeId>,
    pub values: Vec<Vec<f64>>,
}

impl ThroughputSeries {
    pub fn len(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node_series(&self, node: NodeId) -> Option<&[f64]> {
        self.nodes.iter().position(|&n| n == node).map(|i| self.values[i].as_slice())
    }

    /// Writes one CSV row per (frame, node, throughput).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| MetricsError::Csv(e.to_string());
        w.write_record(["frame", "node", "throughput"]).map_err(err)?;
        for i in 0..self.len() {
            let frame = (self.first_frame + i as u64).to_string();
            for (n, &node) in self.nodes.iter().enumerate() {
                w.write_record([frame.as_str(), &node.to_string(), &format!("{:.6}", self.values[n][i])])
                    .map_err(err)?;
            }
        }
        w.flush().map_err(|e| MetricsError::Csv(e.to_string()))
    }
}

/// Reference throughput per node and frame; `None` where the node is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSeries {
    pub nodes: Vec<NodeId>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl ReferenceSeries {
    pub fn n_frames(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }
}

/// For every frame `f ≥ window`, the fraction of slots in frames
/// `(f - window, f]` won by each node. Covers every node that was ever live.
pub fn windowed_throughput(log: &TrajectoryLog, window: u64) -> Result<ThroughputSeries, MetricsError> {
    if window == 0 {
        return Err(MetricsError::EmptyWindow);
    }
    let n_frames = log.n_frames();
    if n_frames == 0 {
        return Err(MetricsError::EmptyLog);
    }
    let nodes = log.node_ids();
    let index = |id: NodeId| nodes.binary_search(&id).ok();
    // successes per frame per node
    let mut per_frame = vec![vec![0u32; n_frames as usize]; nodes.len()];
    for (s, e) in log.slots.iter().enumerate().take((n_frames as usize) * log.frame_len) {
        if let Some(n) = e.winner().and_then(index) {
            per_frame[n][s / log.frame_len] += 1;
        }
    }
    let denom = (window * log.frame_len as u64) as f64;
    let values = per_frame
        .iter()
        .map(|counts| {
            let mut out = Vec::new();
            let mut acc: u64 = counts.iter().take(window as usize).map(|&c| c as u64).sum();
            for f in window..n_frames {
                acc += counts[f as usize] as u64;
                acc -= counts[(f - window) as usize] as u64;
                out.push(acc as f64 / denom);
            }
            out
        })
        .collect();
    Ok(ThroughputSeries { window, frame_len: log.frame_len, first_frame: window, nodes, values })
}

/// The α-fair utility of one scaled throughput.
fn g_alpha(x: f64, alpha: f64) -> f64 {
    let v = UTILITY_SCALE * x;
    if alpha == 1.0 {
        v.ln()
    } else {
        v.powf(1.0 - alpha) / (1.0 - alpha)
    }
}

/// `Σ g_α(100·x_i)`: `ln` for α = 1, `(100x)^(1-α)/(1-α)` otherwise.
pub fn alpha_fair_value(xs: &[f64], alpha: f64) -> Result<f64, MetricsError> {
    let mut total = 0.0;
    for (index, &value) in xs.iter().enumerate() {
        let bad = !value.is_finite() || value < 0.0 || (alpha >= 1.0 && value == 0.0);
        if bad {
            return Err(MetricsError::Domain { index, value, alpha });
        }
        total += g_alpha(value, alpha);
    }
    Ok(total)
}

/// `alpha_fair_value` after clamping every throughput to [`THROUGHPUT_FLOOR`].
pub fn alpha_fair_clamped(xs: &[f64], alpha: f64) -> f64 {
    let clamped: Vec<f64> = xs.iter().map(|x| x.max(THROUGHPUT_FLOOR)).collect();
    alpha_fair_value(&clamped, alpha).expect("clamped throughputs are in the domain")
}

/// `(Σx)² / (N·Σx²)`.
pub fn jain_index(xs: &[f64]) -> Result<f64, MetricsError> {
    if xs.is_empty() {
        return Err(MetricsError::NoInput);
    }
    if let Some((index, &value)) = xs.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
        return Err(MetricsError::Domain { index, value, alpha: f64::NAN });
    }
    let sum: f64 = xs.iter().sum();
    let sq: f64 = xs.iter().map(|x| x * x).sum();
    if sq == 0.0 {
        return Err(MetricsError::AllZero);
    }
    Ok(sum * sum / (xs.len() as f64 * sq))
}

/// RMSE over every (node, frame) pair at or after `warmup` for which the
/// reference defines a value.
pub fn rmse_vs_reference(
    series: &ThroughputSeries,
    reference: &ReferenceSeries,
    warmup: u64,
) -> Result<f64, MetricsError> {
    let last = series.first_frame + series.len() as u64;
    if warmup >= last {
        return Err(MetricsError::Misaligned(format!(
            "warmup {warmup} is not below the series end {last}"
        )));
    }
    if (reference.n_frames() as u64) < last {
        return Err(MetricsError::Misaligned(format!(
            "reference covers {} frames, series needs {last}",
            reference.n_frames()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0u64;
    for (n, &node) in series.nodes.iter().enumerate() {
        let Some(r) = reference.nodes.iter().position(|&id| id == node) else {
            return Err(MetricsError::Misaligned(format!("node {node} has no reference")));
        };
        for (i, &measured) in series.values[n].iter().enumerate() {
            let frame = series.first_frame + i as u64;
            if frame < warmup {
                continue;
            }
            if let Some(target) = reference.values[r][frame as usize] {
                sum += (measured - target).powi(2);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(MetricsError::Misaligned("no overlapping (node, frame) pairs".into()));
    }
    Ok((sum / count as f64).sqrt())
}

fn utilization_impl(
    log: &TrajectoryLog,
    window: u64,
    counts: impl Fn(&crate::mac::SlotEntry) -> bool,
) -> Result<Vec<f64>, MetricsError> {
    if window == 0 {
        return Err(MetricsError::EmptyWindow);
    }
    let n_frames = log.n_frames();
    if n_frames == 0 {
        return Err(MetricsError::EmptyLog);
    }
    let from = n_frames.saturating_sub(window);
    let slots = log.frame_range(from, n_frames);
    let frames = (n_frames - from) as f64;
    let mut util = vec![0.0; log.frame_len];
    for e in slots {
        if counts(e) {
            util[(e.slot % log.frame_len as u64) as usize] += 1.0;
        }
    }
    Ok(util.into_iter().map(|u| u / frames).collect())
}

/// Fraction of the last `window` frames (fewer if the log is shorter) in
/// which each frame position carried any transmission.
pub fn slot_utilization(log: &TrajectoryLog, window: u64) -> Result<Vec<f64>, MetricsError> {
    utilization_impl(log, window, |e| !e.transmitters.is_empty())
}

/// Like [`slot_utilization`] but ignoring transmissions by `node`.
pub fn slot_utilization_excluding(
    log: &TrajectoryLog,
    window: u64,
    node: NodeId,
) -> Result<Vec<f64>, MetricsError> {
    utilization_impl(log, window, |e| e.transmitters.iter().any(|&t| t != node))
}

/// Per-node success rate over frames `[from, to)`, counting only slots in
/// which the node was live. Nodes never live in the range are omitted.
pub fn live_throughputs(log: &TrajectoryLog, from: u64, to: u64) -> Vec<(NodeId, f64)> {
    let slots = log.frame_range(from, to);
    let ids = log.node_ids();
    let mut wins = vec![0u64; ids.len()];
    let mut live = vec![0u64; ids.len()];
    for e in slots {
        for &id in log.live_for(e) {
            let i = ids.binary_search(&id).expect("live ids are known");
            live[i] += 1;
        }
        if let Some(w) = e.winner() {
            let i = ids.binary_search(&w).expect("winner is known");
            wins[i] += 1;
        }
    }
    ids.iter()
        .enumerate()
        .filter(|(i, _)| live[*i] > 0)
        .map(|(i, &id)| (id, wins[i] as f64 / live[i] as f64))
        .collect()
}
