use serde::{Deserialize, Serialize};

use super::SlotOutcome;
use crate::NodeId;

/// Everything that happened in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotEntry {
    pub slot: u64,
    pub outcome: SlotOutcome,
    /// Ascending ids of the nodes that transmitted.
    pub transmitters: Vec<NodeId>,
    /// Index into [`TrajectoryLog::segments`].
    pub segment: u32,
}

impl SlotEntry {
    /// The node that succeeded, if any.
    pub fn winner(&self) -> Option<NodeId> {
        (self.outcome == SlotOutcome::Success).then(|| self.transmitters[0])
    }

    pub fn transmitted(&self, node: NodeId) -> bool {
        self.transmitters.contains(&node)
    }
}

/// A run of frames with a fixed live population. Reward vectors within the
/// segment index nodes by position in `live`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start_frame: u64,
    pub start_slot: u64,
    pub live: Vec<NodeId>,
}

/// Per-slot record kept for every externally driven node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub node: NodeId,
    pub slot_index: u64,
    pub frame_position: usize,
    pub agent_action_prob: f64,
    pub agent_transmitted: bool,
    pub outcome: SlotOutcome,
    pub reward_vector: Vec<u8>,
}

/// Full simulation log.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub frame_len: usize,
    pub slots: Vec<SlotEntry>,
    pub segments: Vec<Segment>,
    pub records: Vec<TrajectoryRecord>,
}

impl TrajectoryLog {
    pub fn new(frame_len: usize) -> Self {
        TrajectoryLog { frame_len, ..Default::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Number of complete frames recorded.
    pub fn n_frames(&self) -> u64 {
        self.slots.len() as u64 / self.frame_len as u64
    }

    pub fn live_for(&self, entry: &SlotEntry) -> &[NodeId] {
        &self.segments[entry.segment as usize].live
    }

    /// Reward vector of a slot over the live set of its segment.
    pub fn reward_vector(&self, entry: &SlotEntry) -> Vec<u8> {
        let winner = entry.winner();
        self.live_for(entry).iter().map(|&id| u8::from(Some(id) == winner)).collect()
    }

    /// All node ids that were ever live, ascending.
    pub fn node_ids(&self) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> =
            self.segments.iter().flat_map(|s| s.live.iter().copied()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Slots of frames `[from, to)`.
    pub fn frame_range(&self, from: u64, to: u64) -> &[SlotEntry] {
        let fl = self.frame_len as u64;
        let end = (to * fl).min(self.slots.len() as u64) as usize;
        let start = ((from * fl) as usize).min(end);
        &self.slots[start..end]
    }

    pub fn records_for(&self, node: NodeId) -> impl Iterator<Item = &TrajectoryRecord> {
        self.records.iter().filter(move |r| r.node == node)
    }

    /// Per-node success counts over a slice of slots.
    pub fn successes(slots: &[SlotEntry], node: NodeId) -> u64 {
        slots.iter().filter(|e| e.winner() == Some(node)).count() as u64
    }
}
