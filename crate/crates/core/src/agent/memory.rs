//! The three memories: strategies, evaluation episodes and recent
//! trajectory summaries.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::backend::payload::EpisodeSummary;
use crate::strategy::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemovalReason {
    Redundant,
    Contradicted,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum HistoryEvent {
    Added { strategy: Strategy },
    Removed { id: String, reason: RemovalReason },
    /// An insertion of a strategy already in the set; nothing changed.
    RedundantSkip { id: String },
}

/// Ordered strategy set with an append-only change log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StrategySet {
    strategies: Vec<Strategy>,
    history: Vec<HistoryEvent>,
}

impl StrategySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn strategies(&self) -> &[Strategy] {
        &self.strategies
    }

    pub fn history(&self) -> &[HistoryEvent] {
        &self.history
    }

    pub fn len(&self) -> usize {
        self.strategies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strategies.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.strategies.iter().map(|s| s.id.as_str()).collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.strategies.iter().any(|s| s.id == id)
    }

    pub fn get(&self, id: &str) -> Option<&Strategy> {
        self.strategies.iter().find(|s| s.id == id)
    }

    /// The most recently inserted strategy still in the set.
    pub fn latest(&self) -> Option<&Strategy> {
        self.strategies.last()
    }

    /// Appends `s`. A duplicate id leaves the set unchanged and is logged as
    /// a redundant skip; returns whether the set changed.
    pub fn insert(&mut self, s: Strategy) -> bool {
        if self.contains(&s.id) {
            self.history.push(HistoryEvent::RedundantSkip { id: s.id });
            return false;
        }
        self.history.push(HistoryEvent::Added { strategy: s.clone() });
        self.strategies.push(s);
        true
    }

    pub fn remove(&mut self, id: &str, reason: RemovalReason) -> bool {
        let Some(i) = self.strategies.iter().position(|s| s.id == id) else { return false };
        self.strategies.remove(i);
        self.history.push(HistoryEvent::Removed { id: id.to_string(), reason });
        true
    }

    /// Rebuilds a set by applying `history` from scratch.
    pub fn replay(history: &[HistoryEvent]) -> StrategySet {
        let mut strategies: Vec<Strategy> = Vec::new();
        for e in history {
            match e {
                HistoryEvent::Added { strategy } => strategies.push(strategy.clone()),
                HistoryEvent::Removed { id, .. } => strategies.retain(|s| &s.id != id),
                HistoryEvent::RedundantSkip { .. } => {}
            }
        }
        StrategySet { strategies, history: history.to_vec() }
    }
}

/// Result of evaluating one strategy on the evaluation scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub strategy_id: String,
    /// Mean objective over scenarios and episodes.
    pub j_estimate: f64,
    /// Mean target over scenarios.
    pub j_opt: f64,
    /// One entry per evaluation scenario.
    pub episodes: Vec<EpisodeSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflection_text: Option<String>,
}

impl EpisodeRecord {
    /// Every scenario reached its target.
    pub fn meets_target(&self) -> bool {
        self.episodes.iter().all(|e| !e.failing())
    }
}

/// Evaluation history. Frozen during the online stage; any write after
/// that is an error.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodicMemory {
    records: Vec<EpisodeRecord>,
    writes: u64,
    frozen: bool,
}

impl EpisodicMemory {
    pub fn push(&mut self, r: EpisodeRecord) -> Result<(), AgentError> {
        if self.frozen {
            return Err(AgentError::MemoryFrozen);
        }
        self.writes += 1;
        self.records.push(r);
        Ok(())
    }

    pub fn set_reflection(&mut self, index: usize, text: String) -> Result<(), AgentError> {
        if self.frozen {
            return Err(AgentError::MemoryFrozen);
        }
        if let Some(r) = self.records.get_mut(index) {
            self.writes += 1;
            r.reflection_text = Some(text);
        }
        Ok(())
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn writes(&self) -> u64 {
        self.writes
    }

    pub fn records(&self) -> &[EpisodeRecord] {
        &self.records
    }
}

/// One query period as remembered by the node agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodSummary {
    pub period: u64,
    pub start: u64,
    pub action: String,
    pub success_rate: f64,
    pub collision_rate: f64,
}

/// Bounded queue of recent period summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMemory {
    capacity: usize,
    entries: VecDeque<PeriodSummary>,
}

impl TrajectoryMemory {
    pub fn new(capacity: usize) -> Self {
        TrajectoryMemory { capacity: capacity.max(1), entries: VecDeque::new() }
    }

    pub fn push(&mut self, p: PeriodSummary) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(p);
    }

    pub fn entries(&self) -> impl Iterator<Item = &PeriodSummary> {
        self.entries.iter()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.entries).expect("summaries serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::{Explore, PolicyVector, Provenance};

    fn s(c: u32) -> Strategy {
        Strategy::new(PolicyVector::Cwnd(c), vec![], Explore { epsilon: 0.0, sigma: 0.0 }, Provenance::Generated)
    }

    #[test]
    fn duplicate_insert_is_a_logged_noop() {
        let mut set = StrategySet::new();
        assert!(set.insert(s(1)));
        assert!(set.insert(s(2)));
        let before = set.strategies().to_vec();
        assert!(!set.insert(s(2)));
        assert_eq!(set.strategies(), before.as_slice());
        assert_eq!(set.history().last(), Some(&HistoryEvent::RedundantSkip { id: s(2).id }));
    }

    #[test]
    fn replay_matches_live_set() {
        let mut set = StrategySet::new();
        set.insert(s(1));
        set.insert(s(2));
        set.remove(&s(1).id, RemovalReason::Contradicted);
        set.insert(s(3));
        assert_eq!(StrategySet::replay(set.history()), set);
        assert_eq!(set.ids(), vec![s(2).id.as_str(), s(3).id.as_str()]);
    }

    #[test]
    fn frozen_memory_rejects_writes() {
        let mut m = EpisodicMemory::default();
        m.freeze();
        let r = EpisodeRecord { strategy_id: "x".into(), j_estimate: 0.0, j_opt: 0.0, episodes: vec![], reflection_text: None };
        assert!(matches!(m.push(r), Err(AgentError::MemoryFrozen)));
        assert_eq!(m.writes(), 0);
    }

    #[test]
    fn trajectory_memory_is_bounded() {
        let mut t = TrajectoryMemory::new(2);
        for i in 0..5 {
            t.push(PeriodSummary { period: i, start: 0, action: String::new(), success_rate: 0.0, collision_rate: 0.0 });
        }
        let kept: Vec<u64> = t.entries().map(|p| p.period).collect();
        assert_eq!(kept, vec![3, 4]);
    }
}
