use std::collections::BTreeMap;

use rand::Rng as _;

use super::log::{Segment, SlotEntry, TrajectoryLog, TrajectoryRecord};
use super::node::{node_decide, node_feedback, NodeState};
use super::{MacError, NodeKind, ScenarioSpec, SlotOutcome};
use crate::rng::{stream, Rng};
use crate::NodeId;

/// Decision for an externally driven node in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentDecision {
    pub prob: f64,
    pub transmit: bool,
}

/// Result of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotResult {
    pub slot: u64,
    pub outcome: SlotOutcome,
    pub transmitters: Vec<NodeId>,
    pub live: Vec<NodeId>,
    pub reward_vector: Vec<u8>,
}

#[derive(Debug, Clone)]
struct NodeRuntime {
    kind: NodeKind,
    state: NodeState,
    rng: Rng,
    live: bool,
}

/// A running MAC simulation. Not meant to be stepped concurrently; independent
/// environments can run on separate threads.
#[derive(Debug, Clone)]
pub struct Environment {
    spec: ScenarioSpec,
    nodes: Vec<NodeRuntime>,
    /// Non-CSMA ids first, then CSMA ids, each ascending.
    order: Vec<usize>,
    slot: u64,
    applied_frame: Option<u64>,
    log: TrajectoryLog,
}

impl Environment {
    /// Builds an environment with every node's state and PRNG stream
    /// initialized from the scenario seed.
    pub fn build(spec: &ScenarioSpec) -> Result<Self, MacError> {
        spec.validate()?;
        let nodes: Vec<NodeRuntime> = spec
            .nodes
            .iter()
            .enumerate()
            .map(|(id, cfg)| {
                let mut rng = stream(spec.seed, id as u64);
                let state = NodeState::init(&cfg.kind, spec.frame_len, &mut rng);
                NodeRuntime { kind: cfg.kind.clone(), state, rng, live: false }
            })
            .collect();
        let is_csma = |i: &usize| matches!(nodes[*i].kind, NodeKind::Csma { .. });
        let mut order: Vec<usize> = (0..nodes.len()).filter(|i| !is_csma(i)).collect();
        order.extend((0..nodes.len()).filter(is_csma));
        let mut env = Environment {
            spec: spec.clone(),
            nodes,
            order,
            slot: 0,
            applied_frame: None,
            log: TrajectoryLog::new(spec.frame_len),
        };
        env.apply_population_event(0);
        Ok(env)
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn frame_len(&self) -> usize {
        self.spec.frame_len
    }

    /// Index of the next slot to simulate.
    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn frame(&self) -> u64 {
        self.slot / self.spec.frame_len as u64
    }

    pub fn frame_position(&self) -> usize {
        (self.slot % self.spec.frame_len as u64) as usize
    }

    pub fn log(&self) -> &TrajectoryLog {
        &self.log
    }

    pub fn into_log(self) -> TrajectoryLog {
        self.log
    }

    pub fn node_state(&self, id: NodeId) -> Option<&NodeState> {
        self.nodes.get(id as usize).map(|n| &n.state)
    }

    /// Ids of live nodes, ascending.
    pub fn live(&self) -> Vec<NodeId> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].live).map(|i| i as NodeId).collect()
    }

    /// Ids of live agent and AWARE nodes, ascending.
    pub fn live_external(&self) -> Vec<NodeId> {
        self.live().into_iter().filter(|&id| self.nodes[id as usize].kind.is_external()).collect()
    }

    /// Applies joins and leaves scheduled for `frame`. Calling it again for the
    /// same frame has no effect.
    pub fn apply_population_event(&mut self, frame: u64) {
        if self.applied_frame == Some(frame) {
            return;
        }
        self.applied_frame = Some(frame);
        let mut changed = false;
        for (cfg, node) in self.spec.nodes.iter().zip(self.nodes.iter_mut()) {
            let live = cfg.live_at(frame);
            if live != node.live {
                node.live = live;
                changed = true;
            }
        }
        if changed || self.log.segments.is_empty() {
            let live = self.live();
            self.log.segments.push(Segment {
                start_frame: frame,
                start_slot: frame * self.spec.frame_len as u64,
                live,
            });
        }
    }

    /// Samples a transmit decision for an external node from its own stream.
    pub fn sample_decision(&mut self, node: NodeId, prob: f64) -> Result<AgentDecision, MacError> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(MacError::InvalidDecision { node, prob });
        }
        let rt = &mut self.nodes[node as usize];
        let transmit = rt.rng.random::<f64>() < prob;
        Ok(AgentDecision { prob, transmit })
    }

    /// Simulates one slot. Population events are applied automatically when
    /// the slot opens a new frame.
    pub fn step_slot(
        &mut self,
        decisions: &BTreeMap<NodeId, AgentDecision>,
    ) -> Result<SlotResult, MacError> {
        let frame_len = self.spec.frame_len as u64;
        if self.slot.is_multiple_of(frame_len) {
            self.apply_population_event(self.slot / frame_len);
        }
        for id in self.live_external() {
            if !decisions.contains_key(&id) {
                return Err(MacError::MissingDecision { node: id });
            }
        }
        let position = (self.slot % frame_len) as usize;
        let mut transmit = vec![false; self.nodes.len()];
        let mut committed = false;
        for &i in &self.order {
            let node = &mut self.nodes[i];
            if !node.live {
                continue;
            }
            let tx = if node.kind.is_external() {
                decisions[&(i as NodeId)].transmit
            } else {
                node_decide(&mut node.state, &mut node.rng, position, committed)
            };
            transmit[i] = tx;
            committed |= tx;
        }
        let transmitters: Vec<NodeId> =
            (0..self.nodes.len()).filter(|&i| transmit[i]).map(|i| i as NodeId).collect();
        let outcome = SlotOutcome::from_transmitters(transmitters.len());
        for (i, node) in self.nodes.iter_mut().enumerate() {
            if node.live {
                node_feedback(&mut node.state, &mut node.rng, transmit[i], outcome);
            }
        }
        let segment = (self.log.segments.len() - 1) as u32;
        let entry = SlotEntry { slot: self.slot, outcome, transmitters, segment };
        let reward_vector = self.log.reward_vector(&entry);
        let live = self.log.live_for(&entry).to_vec();
        for (&node, d) in decisions {
            if self.nodes.get(node as usize).is_some_and(|n| n.live && n.kind.is_external()) {
                self.log.records.push(TrajectoryRecord {
                    node,
                    slot_index: self.slot,
                    frame_position: position,
                    agent_action_prob: d.prob,
                    agent_transmitted: d.transmit,
                    outcome,
                    reward_vector: reward_vector.clone(),
                });
            }
        }
        let result = SlotResult {
            slot: self.slot,
            outcome,
            transmitters: entry.transmitters.clone(),
            live,
            reward_vector,
        };
        self.log.slots.push(entry);
        self.slot += 1;
        Ok(result)
    }

    /// Samples decisions for every live external node from the given
    /// probabilities and steps one slot.
    pub fn step_with_probs(&mut self, probs: &BTreeMap<NodeId, f64>) -> Result<SlotResult, MacError> {
        let frame_len = self.spec.frame_len as u64;
        if self.slot.is_multiple_of(frame_len) {
            self.apply_population_event(self.slot / frame_len);
        }
        let mut decisions = BTreeMap::new();
        for id in self.live_external() {
            let p = *probs.get(&id).ok_or(MacError::MissingDecision { node: id })?;
            decisions.insert(id, self.sample_decision(id, p)?);
        }
        self.step_slot(&decisions)
    }

    /// Runs `n_frames` frames. `policy` is called once per slot, after any
    /// population event for that slot has been applied, and returns the
    /// transmission probability of each live external node.
    pub fn run_frames<F>(&mut self, n_frames: u64, mut policy: F) -> Result<(), MacError>
    where
        F: FnMut(&Environment) -> BTreeMap<NodeId, f64>,
    {
        let frame_len = self.spec.frame_len as u64;
        for _ in 0..n_frames * frame_len {
            if self.slot.is_multiple_of(frame_len) {
                self.apply_population_event(self.slot / frame_len);
            }
            let probs = policy(self);
            self.step_with_probs(&probs)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mac::NodeConfig;

    #[test]
    fn collision_semantics() {
        let spec = ScenarioSpec::new(
            vec![NodeConfig::new(NodeKind::Agent), NodeConfig::new(NodeKind::Agent)],
            1,
            0,
        );
        let mut env = Environment::build(&spec).unwrap();
        let d = |a: bool, b: bool| {
            BTreeMap::from([
                (0, AgentDecision { prob: 0.0, transmit: a }),
                (1, AgentDecision { prob: 0.0, transmit: b }),
            ])
        };
        let r = env.step_slot(&d(true, true)).unwrap();
        assert_eq!((r.outcome, r.reward_vector), (SlotOutcome::Collided, vec![0, 0]));
        let r = env.step_slot(&d(true, false)).unwrap();
        assert_eq!((r.outcome, r.reward_vector), (SlotOutcome::Success, vec![1, 0]));
        let r = env.step_slot(&d(false, false)).unwrap();
        assert_eq!((r.outcome, r.reward_vector), (SlotOutcome::Idle, vec![0, 0]));
        assert_eq!(env.log().records.len(), 6);
    }

    #[test]
    fn missing_decision_is_reported() {
        let spec = ScenarioSpec::new(vec![NodeConfig::new(NodeKind::Agent)], 1, 0);
        let mut env = Environment::build(&spec).unwrap();
        assert_eq!(env.step_slot(&BTreeMap::new()), Err(MacError::MissingDecision { node: 0 }));
    }

    #[test]
    fn events_change_population_only_at_their_frame() {
        let spec = ScenarioSpec::new(
            vec![
                NodeConfig::new(NodeKind::Aloha { q: 0.2 }),
                NodeConfig::new(NodeKind::Aloha { q: 0.2 }).leaving(5),
                NodeConfig::new(NodeKind::Tdma { slots: vec![3] }).joining(7),
            ],
            10,
            3,
        );
        let mut env = Environment::build(&spec).unwrap();
        env.run_frames(10, |_| BTreeMap::new()).unwrap();
        let log = env.log();
        let starts: Vec<u64> = log.segments.iter().map(|s| s.start_frame).collect();
        assert_eq!(starts, vec![0, 5, 7]);
        assert_eq!(log.segments[1].live, vec![0]);
        assert_eq!(log.segments[2].live, vec![0, 2]);
        // the ALOHA node that left never transmits afterwards
        assert!(log.frame_range(5, 10).iter().all(|e| !e.transmitted(1)));
    }
}
