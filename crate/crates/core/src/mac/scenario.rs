use serde::{Deserialize, Serialize};

use super::MacError;
use crate::NodeId;

pub const SCHEMA_VERSION: &str = "mac-v1";

/// Behaviour of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeKind {
    /// Slotted ALOHA transmitting with fixed probability `q` in every slot.
    Aloha { q: f64 },
    /// Fixed schedule over frame positions.
    Tdma { slots: Vec<usize> },
    /// Carrier sensing with a frozen backoff counter while the channel is busy.
    Csma { window: u32, max_stage: u32 },
    /// Fixed-window ALOHA.
    FwAloha { window: u32 },
    /// Exponential-backoff ALOHA.
    EbAloha { window: u32, max_stage: u32 },
    /// Learning node driven by the agent loop.
    Agent,
    /// Ideal node driven by the oracle policy.
    Aware,
}

impl NodeKind {
    /// True for nodes whose decisions come from outside the simulator.
    pub fn is_external(&self) -> bool {
        matches!(self, NodeKind::Agent | NodeKind::Aware)
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            NodeKind::Aloha { .. } => "aloha",
            NodeKind::Tdma { .. } => "tdma",
            NodeKind::Csma { .. } => "csma",
            NodeKind::FwAloha { .. } => "fw_aloha",
            NodeKind::EbAloha { .. } => "eb_aloha",
            NodeKind::Agent => "agent",
            NodeKind::Aware => "aware",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    #[serde(flatten)]
    pub kind: NodeKind,
    #[serde(default)]
    pub join_frame: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leave_frame: Option<u64>,
}

impl NodeConfig {
    pub fn new(kind: NodeKind) -> Self {
        NodeConfig { kind, join_frame: 0, leave_frame: None }
    }

    pub fn joining(mut self, frame: u64) -> Self {
        self.join_frame = frame;
        self
    }

    pub fn leaving(mut self, frame: u64) -> Self {
        self.leave_frame = Some(frame);
        self
    }

    /// Whether the node is live during `frame`.
    pub fn live_at(&self, frame: u64) -> bool {
        frame >= self.join_frame && self.leave_frame.is_none_or(|l| frame < l)
    }
}

fn default_schema() -> String {
    SCHEMA_VERSION.to_string()
}

fn default_frame_len() -> usize {
    10
}

fn default_slot_ms() -> f64 {
    1.0
}

/// A MAC experiment. Node ids are positions in `nodes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default = "default_schema")]
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub nodes: Vec<NodeConfig>,
    #[serde(default = "default_frame_len")]
    pub frame_len: usize,
    pub total_frames: u64,
    #[serde(default = "default_slot_ms")]
    pub slot_duration_ms: f64,
    #[serde(default)]
    pub seed: u64,
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> MacError {
    MacError::InvalidSpec { path: path.into(), reason: reason.into() }
}

impl ScenarioSpec {
    pub fn new(nodes: Vec<NodeConfig>, total_frames: u64, seed: u64) -> Self {
        ScenarioSpec {
            schema: default_schema(),
            name: None,
            nodes,
            frame_len: default_frame_len(),
            total_frames,
            slot_duration_ms: default_slot_ms(),
            seed,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, MacError> {
        let spec: ScenarioSpec =
            serde_json::from_str(text).map_err(|e| MacError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), MacError> {
        if self.schema != SCHEMA_VERSION {
            return Err(invalid("schema", format!("expected \"{SCHEMA_VERSION}\"")));
        }
        if self.frame_len == 0 {
            return Err(invalid("frame_len", "must be at least 1"));
        }
        if self.total_frames == 0 {
            return Err(invalid("total_frames", "must be at least 1"));
        }
        if !(self.slot_duration_ms > 0.0 && self.slot_duration_ms.is_finite()) {
            return Err(invalid("slot_duration_ms", "must be positive"));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            let at = |field: &str| format!("nodes[{i}].{field}");
            match &n.kind {
                NodeKind::Aloha { q } => {
                    if !(0.0..=1.0).contains(q) {
                        return Err(invalid(at("q"), format!("{q} is not a probability")));
                    }
                }
                NodeKind::Tdma { slots } => {
                    for (j, &s) in slots.iter().enumerate() {
                        if s >= self.frame_len {
                            return Err(invalid(
                                format!("nodes[{i}].slots[{j}]"),
                                format!("slot {s} outside frame of {}", self.frame_len),
                            ));
                        }
                        if slots[..j].contains(&s) {
                            return Err(invalid(
                                format!("nodes[{i}].slots[{j}]"),
                                format!("slot {s} listed twice"),
                            ));
                        }
                    }
                }
                NodeKind::Csma { window, max_stage } | NodeKind::EbAloha { window, max_stage } => {
                    if *window == 0 {
                        return Err(invalid(at("window"), "must be at least 1"));
                    }
                    if *max_stage > 16 {
                        return Err(invalid(at("max_stage"), "must be at most 16"));
                    }
                }
                NodeKind::FwAloha { window } => {
                    if *window == 0 {
                        return Err(invalid(at("window"), "must be at least 1"));
                    }
                }
                NodeKind::Agent | NodeKind::Aware => {}
            }
            if let Some(leave) = n.leave_frame {
                if leave <= n.join_frame {
                    return Err(invalid(at("leave_frame"), "must be after join_frame"));
                }
            }
        }
        if !self.nodes.iter().any(|n| n.live_at(0)) {
            return Err(invalid("nodes", "no node is present at frame 0"));
        }
        Ok(())
    }

    /// Ids of nodes live during `frame`, ascending.
    pub fn live_at(&self, frame: u64) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.live_at(frame))
            .map(|(i, _)| i as NodeId)
            .collect()
    }

    /// Frames inside the horizon at which the live set changes.
    pub fn event_frames(&self) -> Vec<u64> {
        let mut frames: Vec<u64> = self
            .nodes
            .iter()
            .flat_map(|n| [Some(n.join_frame), n.leave_frame])
            .flatten()
            .filter(|&f| f > 0 && f < self.total_frames)
            .collect();
        frames.sort_unstable();
        frames.dedup();
        frames.retain(|&f| self.live_at(f) != self.live_at(f - 1));
        frames
    }

    /// Population segments as `(start_frame, end_frame_exclusive, live ids)`.
    pub fn segments(&self) -> Vec<(u64, u64, Vec<NodeId>)> {
        let mut bounds = vec![0];
        bounds.extend(self.event_frames());
        bounds.push(self.total_frames);
        bounds.windows(2).map(|w| (w[0], w[1], self.live_at(w[0]))).collect()
    }

    pub fn agent_ids(&self) -> Vec<NodeId> {
        self.ids_where(|k| matches!(k, NodeKind::Agent))
    }

    pub fn ids_where(&self, pred: impl Fn(&NodeKind) -> bool) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| pred(&n.kind))
            .map(|(i, _)| i as NodeId)
            .collect()
    }

    /// Compact population label in the style "1T+2A+1H".
    pub fn population_label(&self, live: &[NodeId]) -> String {
        let count = |pred: &dyn Fn(&NodeKind) -> bool| {
            live.iter().filter(|&&id| pred(&self.nodes[id as usize].kind)).count()
        };
        let parts = [
            (count(&|k| matches!(k, NodeKind::Tdma { .. })), "T"),
            (count(&|k| matches!(k, NodeKind::Csma { .. })), "C"),
            (count(&|k| matches!(k, NodeKind::FwAloha { .. })), "FW"),
            (count(&|k| matches!(k, NodeKind::EbAloha { .. })), "EB"),
            (count(&|k| matches!(k, NodeKind::Aloha { .. })), "A"),
            (count(&|k| k.is_external()), "H"),
        ];
        let label: Vec<String> =
            parts.iter().filter(|(n, _)| *n > 0).map(|(n, s)| format!("{n}{s}")).collect();
        label.join("+")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dynamic() -> ScenarioSpec {
        ScenarioSpec::new(
            vec![
                NodeConfig::new(NodeKind::Agent),
                NodeConfig::new(NodeKind::Aloha { q: 0.2 }),
                NodeConfig::new(NodeKind::Aloha { q: 0.2 }).leaving(2500),
                NodeConfig::new(NodeKind::Aloha { q: 0.2 }).joining(5000),
                NodeConfig::new(NodeKind::Aloha { q: 0.2 }).joining(5000),
                NodeConfig::new(NodeKind::Tdma { slots: vec![3, 5] }).joining(7500),
            ],
            10_000,
            1,
        )
    }

    #[test]
    fn segments_follow_events() {
        let s = dynamic();
        assert_eq!(s.event_frames(), vec![2500, 5000, 7500]);
        let labels: Vec<String> =
            s.segments().iter().map(|(_, _, live)| s.population_label(live)).collect();
        assert_eq!(labels, ["2A+1H", "1A+1H", "3A+1H", "1T+3A+1H"]);
    }

    #[test]
    fn rejects_bad_probability_with_path() {
        let mut s = dynamic();
        s.nodes[1].kind = NodeKind::Aloha { q: 1.3 };
        match s.validate() {
            Err(MacError::InvalidSpec { path, .. }) => assert_eq!(path, "nodes[1].q"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_round_trip() {
        let s = dynamic();
        let back = ScenarioSpec::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_empty_start_and_bad_window() {
        let s = ScenarioSpec::new(vec![NodeConfig::new(NodeKind::Agent).joining(3)], 10, 0);
        assert!(matches!(s.validate(), Err(MacError::InvalidSpec { .. })));
        let s = ScenarioSpec::new(vec![NodeConfig::new(NodeKind::FwAloha { window: 0 })], 10, 0);
        assert!(matches!(s.validate(), Err(MacError::InvalidSpec { path, .. }) if path == "nodes[0].window"));
        let s = ScenarioSpec::new(vec![NodeConfig::new(NodeKind::Tdma { slots: vec![10] })], 10, 0);
        assert!(matches!(s.validate(), Err(MacError::InvalidSpec { path, .. }) if path == "nodes[0].slots[0]"));
    }
}
