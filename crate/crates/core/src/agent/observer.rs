//! The observer agent: window statistics over what a node can see from its
//! own position on the channel.
//!
//! A node observes the outcome of every slot and, for successful slots, the
//! sender. It knows whether it transmitted itself. Joins and leaves are
//! announced, so the live population count is visible too. Everything below
//! is computed from those quantities only.

use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::mac::{SlotEntry, SlotOutcome, TrajectoryLog};
use crate::strategy::PolicyVector;
use crate::tcp::RoundEntry;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Overused,
    Unused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotableSlot {
    pub slot: usize,
    pub kind: SlotKind,
    pub utilization: f64,
}

/// Half-open range `[start, end)` of frames (MAC) or rounds (TCP).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: u64,
    pub end: u64,
}

impl Window {
    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRates {
    pub success: f64,
    pub collision: f64,
    pub idle: f64,
}

impl OutcomeRates {
    pub(crate) fn of(slots: &[SlotEntry]) -> Self {
        let n = slots.len().max(1) as f64;
        let count = |o: SlotOutcome| slots.iter().filter(|e| e.outcome == o).count() as f64 / n;
        OutcomeRates {
            success: count(SlotOutcome::Success),
            collision: count(SlotOutcome::Collided),
            idle: count(SlotOutcome::Idle),
        }
    }

    fn max_shift(&self, other: &OutcomeRates) -> f64 {
        (self.success - other.success)
            .abs()
            .max((self.collision - other.collision).abs())
            .max((self.idle - other.idle).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObserverThresholds {
    pub convergence_eps: f64,
    pub convergence_periods: u32,
    pub rate_shift: f64,
    pub theta_hi: f64,
    /// Minimum window, frames or rounds.
    pub window: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverReport {
    pub converged: bool,
    pub env_changed: bool,
    pub notable: Vec<NotableSlot>,
    pub window: Window,
    /// Per-slot use by other nodes (MAC only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utilization: Option<Vec<f64>>,
    /// Largest outcome-rate shift between the halves of the window.
    pub rate_shift: f64,
    /// Joins or leaves in the recent half of the window.
    pub membership_changed: bool,
}

fn fmt_util(u: f64) -> String {
    let s = format!("{u:.2}");
    let s = s.trim_end_matches('0');
    if s.ends_with('.') {
        format!("{s}0")
    } else {
        s.to_string()
    }
}

impl ObserverReport {
    /// Findings as short phrases, e.g. `slots 3,5 utilization 1.0 (overused)`.
    /// Slots sharing a kind and rounded utilization are grouped.
    pub fn findings(&self) -> Vec<String> {
        let mut groups: Vec<(SlotKind, String, Vec<usize>)> = Vec::new();
        for n in &self.notable {
            let u = fmt_util(n.utilization);
            match groups.iter_mut().find(|(k, g, _)| *k == n.kind && *g == u) {
                Some((_, _, slots)) => slots.push(n.slot),
                None => groups.push((n.kind, u, vec![n.slot])),
            }
        }
        groups.sort_by_key(|(k, _, _)| *k != SlotKind::Overused);
        let mut out: Vec<String> = groups
            .into_iter()
            .map(|(kind, u, slots)| {
                let list: Vec<String> = slots.iter().map(ToString::to_string).collect();
                let noun = if slots.len() == 1 { "slot" } else { "slots" };
                let kind = match kind {
                    SlotKind::Overused => "overused",
                    SlotKind::Unused => "unused",
                };
                format!("{noun} {} utilization {u} ({kind})", list.join(","))
            })
            .collect();
        if self.env_changed {
            out.push("environment changed".into());
        }
        if self.converged {
            out.push("action converged".into());
        }
        out
    }

    /// Plain-text rendering used in node-agent prompts.
    pub fn render(&self) -> String {
        let f = self.findings();
        let body = if f.is_empty() { "nothing notable".to_string() } else { f.join("; ") };
        format!("window {}..{}: {body}", self.window.start, self.window.end)
    }
}

/// Whether the last `k + 1` decisions differ pairwise by less than `eps`.
pub fn is_converged(decided: &[PolicyVector], eps: f64, k: u32) -> bool {
    let k = k as usize;
    if k == 0 {
        return !decided.is_empty();
    }
    if decided.len() < k + 1 {
        return false;
    }
    decided[decided.len() - k - 1..].windows(2).all(|w| w[0].linf(&w[1]) < eps)
}

/// Per-slot fraction of frames in which some node other than `agent` used
/// the slot, as the agent can infer it: when it transmitted, a collision
/// means someone else did too; when silent, any non-idle outcome.
pub fn observed_utilization(log: &TrajectoryLog, agent: NodeId, window: Window) -> Vec<f64> {
    let mut util = vec![0.0; log.frame_len];
    let frames = window.len().max(1) as f64;
    for e in log.frame_range(window.start, window.end) {
        let mine = e.transmitted(agent);
        let other = if mine { e.outcome == SlotOutcome::Collided } else { e.outcome != SlotOutcome::Idle };
        if other {
            util[(e.slot % log.frame_len as u64) as usize] += 1.0;
        }
    }
    util.into_iter().map(|u| u / frames).collect()
}

/// Frame of the most recent population change at or before `end`, if any.
pub fn last_change(log: &TrajectoryLog, end: u64) -> Option<u64> {
    log.segments.iter().skip(1).map(|s| s.start_frame).filter(|&f| f < end).max()
}

/// Analyzes the last `thresholds.window` frames ending before `end`.
pub fn observer_analyze(
    log: &TrajectoryLog,
    agent: NodeId,
    end: u64,
    decided: &[PolicyVector],
    th: &ObserverThresholds,
) -> Result<ObserverReport, AgentError> {
    let m = th.window.max(1);
    if end < m || log.n_frames() < end {
        return Err(AgentError::WindowTooShort { have: end.min(log.n_frames()), need: m });
    }
    let window = Window { start: end - m, end };
    let utilization = observed_utilization(log, agent, window);
    let mid = window.start + m / 2;
    let older = OutcomeRates::of(log.frame_range(window.start, mid));
    let recent = OutcomeRates::of(log.frame_range(mid, end));
    let rate_shift = older.max_shift(&recent);
    let membership_changed = log.segments.iter().skip(1).any(|s| s.start_frame >= mid && s.start_frame < end);
    let notable = utilization
        .iter()
        .enumerate()
        .filter_map(|(slot, &u)| {
            let kind = if u + 1e-12 >= th.theta_hi {
                SlotKind::Overused
            } else if u <= 1e-12 {
                SlotKind::Unused
            } else {
                return None;
            };
            Some(NotableSlot { slot, kind, utilization: u })
        })
        .collect();
    Ok(ObserverReport {
        converged: is_converged(decided, th.convergence_eps, th.convergence_periods),
        env_changed: membership_changed || rate_shift > th.rate_shift,
        notable,
        window,
        utilization: Some(utilization),
        rate_shift,
        membership_changed,
    })
}

/// Who the agent is competing with, per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentionEstimate {
    pub window: Window,
    /// Other live nodes without a fixed slot pattern, unseen ones included.
    pub random: u32,
    /// Nodes whose successes all fall in heavily used slots, with those slots.
    pub scheduled: Vec<(NodeId, Vec<usize>)>,
    /// Contenders per slot: the random nodes plus scheduled owners of the slot.
    pub contenders: Vec<u32>,
}

/// Classifies the other live nodes from their successes in `window`.
pub fn estimate_contention(log: &TrajectoryLog, agent: NodeId, window: Window, theta_hi: f64) -> ContentionEstimate {
    let fl = log.frame_len;
    let util = observed_utilization(log, agent, window);
    let slots = log.frame_range(window.start, window.end);
    let live_others: Vec<NodeId> = slots
        .last()
        .map(|e| log.live_for(e).iter().copied().filter(|&id| id != agent).collect())
        .unwrap_or_default();
    let mut scheduled = Vec::new();
    for &id in &live_others {
        let mut positions: Vec<usize> =
            slots.iter().filter(|e| e.winner() == Some(id)).map(|e| (e.slot % fl as u64) as usize).collect();
        if positions.is_empty() {
            continue;
        }
        positions.sort_unstable();
        positions.dedup();
        if positions.iter().all(|&k| util[k] + 1e-12 >= theta_hi) {
            scheduled.push((id, positions));
        }
    }
    let random = (live_others.len() - scheduled.len()) as u32;
    let mut contenders = vec![random; fl];
    for (_, positions) in &scheduled {
        for &k in positions {
            contenders[k] += 1;
        }
    }
    ContentionEstimate { window, random, scheduled, contenders }
}

/// Window used for contention estimates at `end`: since the last population
/// change, at most `max_frames` and at least `min_frames` long.
pub fn since_change_window(log: &TrajectoryLog, end: u64, max_frames: u64, min_frames: u64) -> Window {
    let mut start = end.saturating_sub(max_frames);
    if let Some(c) = last_change(log, end) {
        start = start.max(c);
    }
    start = start.min(end.saturating_sub(min_frames));
    Window { start, end }
}

/// What a TCP agent flow observes over a window of rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcpObservation {
    pub window: Window,
    /// Fraction of rounds with loss.
    pub loss_rate: f64,
    /// Mean RTT over the minimum RTT seen, minus one.
    pub rtt_inflation: f64,
    /// Packets per second.
    pub throughput: f64,
    pub live: u32,
}

pub fn tcp_observe(log: &[RoundEntry], agent: NodeId, window: Window) -> Option<TcpObservation> {
    let rounds: Vec<_> = log
        .iter()
        .filter(|e| e.round >= window.start && e.round < window.end)
        .filter_map(|e| e.flows.get(&agent).map(|fb| (e, fb)))
        .collect();
    if rounds.is_empty() {
        return None;
    }
    let n = rounds.len() as f64;
    let loss_rate = rounds.iter().filter(|(_, fb)| fb.loss).count() as f64 / n;
    let min_rtt = rounds.iter().map(|(_, fb)| fb.rtt).fold(f64::INFINITY, f64::min);
    let mean_rtt = rounds.iter().map(|(_, fb)| fb.rtt).sum::<f64>() / n;
    let throughput = rounds.iter().map(|(_, fb)| fb.throughput()).sum::<f64>() / n;
    let live = rounds.last().map_or(0, |(e, _)| e.flows.len() as u32);
    Some(TcpObservation { window, loss_rate, rtt_inflation: mean_rtt / min_rtt - 1.0, throughput, live })
}

/// Rounds at which the set of live flows changed, up to `end`.
pub fn tcp_membership_changes(log: &[RoundEntry], end: u64) -> Vec<u64> {
    log.windows(2)
        .filter(|w| w[1].round < end && !w[0].flows.keys().eq(w[1].flows.keys()))
        .map(|w| w[1].round)
        .collect()
}

/// TCP counterpart of [`observer_analyze`]: no slots, so only convergence
/// and change detection (membership, or a loss-rate shift between halves).
pub fn tcp_observer_analyze(
    log: &[RoundEntry],
    agent: NodeId,
    end: u64,
    decided: &[PolicyVector],
    th: &ObserverThresholds,
) -> Result<ObserverReport, AgentError> {
    let m = th.window.max(2);
    if end < m || (log.len() as u64) < end {
        return Err(AgentError::WindowTooShort { have: end.min(log.len() as u64), need: m });
    }
    let window = Window { start: end - m, end };
    let mid = window.start + m / 2;
    let older = tcp_observe(log, agent, Window { start: window.start, end: mid });
    let recent = tcp_observe(log, agent, Window { start: mid, end });
    let rate_shift = match (older, recent) {
        (Some(a), Some(b)) => (a.loss_rate - b.loss_rate).abs(),
        _ => 0.0,
    };
    let membership_changed = tcp_membership_changes(log, end).iter().any(|&r| r >= mid);
    Ok(ObserverReport {
        converged: is_converged(decided, th.convergence_eps, th.convergence_periods),
        env_changed: membership_changed || rate_shift > th.rate_shift,
        notable: Vec::new(),
        window,
        utilization: None,
        rate_shift,
        membership_changed,
    })
}
