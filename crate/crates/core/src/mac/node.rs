//! Protocol state machines.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{NodeKind, SlotOutcome};
use crate::rng::Rng;

/// Backoff counter shared by CSMA, FW-ALOHA and EB-ALOHA.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Backoff {
    pub counter: u32,
    pub stage: u32,
    pub base_window: u32,
    pub max_stage: u32,
}

impl Backoff {
    pub fn new(base_window: u32, max_stage: u32, rng: &mut Rng) -> Self {
        let mut b = Backoff { counter: 0, stage: 0, base_window, max_stage };
        b.resample(rng);
        b
    }

    /// `min(2^stage * W, 2^m * W)`.
    pub fn current_window(&self) -> u32 {
        self.base_window << self.stage.min(self.max_stage)
    }

    pub fn resample(&mut self, rng: &mut Rng) {
        self.counter = rng.random_range(0..self.current_window());
    }
}

/// Mutable per-node protocol state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NodeState {
    Aloha { q: f64 },
    Tdma { schedule: Vec<bool> },
    Csma(Backoff),
    FwAloha(Backoff),
    EbAloha(Backoff),
    /// Decisions are supplied by the caller.
    External,
}

impl NodeState {
    pub fn init(kind: &NodeKind, frame_len: usize, rng: &mut Rng) -> Self {
        match kind {
            NodeKind::Aloha { q } => NodeState::Aloha { q: *q },
            NodeKind::Tdma { slots } => {
                let mut schedule = vec![false; frame_len];
                for &s in slots {
                    schedule[s] = true;
                }
                NodeState::Tdma { schedule }
            }
            NodeKind::Csma { window, max_stage } => {
                NodeState::Csma(Backoff::new(*window, *max_stage, rng))
            }
            NodeKind::FwAloha { window } => NodeState::FwAloha(Backoff::new(*window, 0, rng)),
            NodeKind::EbAloha { window, max_stage } => {
                NodeState::EbAloha(Backoff::new(*window, *max_stage, rng))
            }
            NodeKind::Agent | NodeKind::Aware => NodeState::External,
        }
    }

    pub fn backoff(&self) -> Option<&Backoff> {
        match self {
            NodeState::Csma(b) | NodeState::FwAloha(b) | NodeState::EbAloha(b) => Some(b),
            _ => None,
        }
    }
}

/// Decides whether a protocol node transmits in this slot. `carrier_busy` is
/// only consulted by CSMA. External nodes never transmit through this path.
pub fn node_decide(
    state: &mut NodeState,
    rng: &mut Rng,
    frame_position: usize,
    carrier_busy: bool,
) -> bool {
    match state {
        NodeState::Aloha { q } => rng.random::<f64>() < *q,
        NodeState::Tdma { schedule } => schedule[frame_position],
        NodeState::Csma(b) => {
            if carrier_busy {
                false
            } else {
                b.counter = b.counter.saturating_sub(1);
                b.counter == 0
            }
        }
        NodeState::FwAloha(b) | NodeState::EbAloha(b) => {
            if b.counter == 0 {
                true
            } else {
                b.counter -= 1;
                false
            }
        }
        NodeState::External => false,
    }
}

/// Post-slot update: backoff nodes that transmitted adjust their stage and
/// draw a fresh counter.
pub fn node_feedback(state: &mut NodeState, rng: &mut Rng, transmitted: bool, outcome: SlotOutcome) {
    if !transmitted {
        return;
    }
    match state {
        NodeState::Csma(b) | NodeState::EbAloha(b) => {
            match outcome {
                SlotOutcome::Collided => b.stage = (b.stage + 1).min(b.max_stage),
                _ => b.stage = 0,
            }
            b.resample(rng);
        }
        NodeState::FwAloha(b) => b.resample(rng),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn tdma_follows_schedule() {
        let mut rng = stream(1, 0);
        let mut s = NodeState::init(&NodeKind::Tdma { slots: vec![3, 5] }, 10, &mut rng);
        let tx: Vec<bool> = (0..10).map(|k| node_decide(&mut s, &mut rng, k, false)).collect();
        assert!(!tx[4]);
        assert_eq!(tx.iter().filter(|&&t| t).count(), 2);
        assert!(tx[3] && tx[5]);
    }

    #[test]
    fn eb_window_doubles_and_caps() {
        let mut rng = stream(1, 0);
        let mut s = NodeState::init(&NodeKind::EbAloha { window: 2, max_stage: 2 }, 10, &mut rng);
        node_feedback(&mut s, &mut rng, true, SlotOutcome::Collided);
        assert_eq!(s.backoff().unwrap().current_window(), 4);
        node_feedback(&mut s, &mut rng, true, SlotOutcome::Collided);
        node_feedback(&mut s, &mut rng, true, SlotOutcome::Collided);
        assert_eq!(s.backoff().unwrap().current_window(), 8);
        node_feedback(&mut s, &mut rng, true, SlotOutcome::Success);
        assert_eq!(s.backoff().unwrap().current_window(), 2);
    }

    #[test]
    fn csma_freezes_when_busy() {
        let mut rng = stream(1, 0);
        let mut s = NodeState::Csma(Backoff { counter: 1, stage: 0, base_window: 2, max_stage: 4 });
        assert!(!node_decide(&mut s, &mut rng, 0, true));
        assert_eq!(s.backoff().unwrap().counter, 1);
        assert!(node_decide(&mut s, &mut rng, 0, false));
    }

    #[test]
    fn fw_counts_down_then_transmits() {
        let mut rng = stream(1, 0);
        let mut s = NodeState::FwAloha(Backoff { counter: 2, stage: 0, base_window: 4, max_stage: 0 });
        assert!(!node_decide(&mut s, &mut rng, 0, false));
        assert!(!node_decide(&mut s, &mut rng, 1, false));
        assert!(node_decide(&mut s, &mut rng, 2, false));
        node_feedback(&mut s, &mut rng, true, SlotOutcome::Success);
        assert!(s.backoff().unwrap().counter < 4);
    }
}
