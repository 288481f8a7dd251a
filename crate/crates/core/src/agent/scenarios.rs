//! Labelled scenarios used for demonstrations and offline evaluation, plus
//! the standard dynamic schedule.

use serde::{Deserialize, Serialize};

use crate::mac::{NodeConfig, NodeKind, ScenarioSpec};
use crate::tcp::{Controller, FlowConfig, TcpScenarioSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum Label {
    Csma,
    Tdma,
    Aloha,
    Dynamic,
    Reno,
    Vegas,
    TcpDynamic,
}

impl Label {
    pub const MAC: [Label; 4] = [Label::Csma, Label::Tdma, Label::Aloha, Label::Dynamic];
    pub const TCP: [Label; 3] = [Label::Reno, Label::Vegas, Label::TcpDynamic];
    /// Static MAC labels the oracle can score.
    pub const MAC_EVAL: [Label; 2] = [Label::Aloha, Label::Tdma];
    pub const TCP_EVAL: [Label; 2] = [Label::Reno, Label::Vegas];

    pub fn name(self) -> &'static str {
        match self {
            Label::Csma => "CSMA",
            Label::Tdma => "TDMA",
            Label::Aloha => "ALOHA",
            Label::Dynamic => "DYNAMIC",
            Label::Reno => "RENO",
            Label::Vegas => "VEGAS",
            Label::TcpDynamic => "TCP-DYNAMIC",
        }
    }

    pub fn is_mac(self) -> bool {
        Label::MAC.contains(&self)
    }
}

/// Frames of the shortened dynamic demo schedule.
pub const DYNAMIC_DEMO_FRAMES: u64 = 1000;

/// MAC scenario for `label` with the agent as the last node.
pub fn mac_label_scenario(label: Label, frames: u64, seed: u64) -> ScenarioSpec {
    let aloha = || NodeConfig::new(NodeKind::Aloha { q: 0.2 });
    let mut nodes = match label {
        Label::Aloha => vec![aloha(), aloha()],
        Label::Tdma => vec![NodeConfig::new(NodeKind::Tdma { slots: vec![3, 5] })],
        Label::Csma => vec![NodeConfig::new(NodeKind::Csma { window: 2, max_stage: 4 })],
        Label::Dynamic => {
            let q = DYNAMIC_DEMO_FRAMES / 4;
            vec![
                aloha(),
                aloha().leaving(q),
                aloha().joining(2 * q),
                aloha().joining(2 * q),
                NodeConfig::new(NodeKind::Tdma { slots: vec![3, 5] }).joining(3 * q),
            ]
        }
        other => panic!("{} is not a MAC label", other.name()),
    };
    nodes.push(NodeConfig::new(NodeKind::Agent));
    let frames = if label == Label::Dynamic { DYNAMIC_DEMO_FRAMES } else { frames };
    let mut spec = ScenarioSpec::new(nodes, frames, seed);
    spec.name = Some(label.name().to_string());
    spec
}

/// TCP scenario for `label` with the agent as the last flow.
pub fn tcp_label_scenario(label: Label, rounds: u64, seed: u64) -> TcpScenarioSpec {
    let mut flows = match label {
        Label::Reno => vec![FlowConfig::new(Controller::Reno)],
        Label::Vegas => vec![FlowConfig::new(Controller::Vegas)],
        Label::TcpDynamic => vec![
            FlowConfig::new(Controller::Reno).leaving(rounds / 2),
            FlowConfig::new(Controller::Vegas).joining(rounds / 2),
        ],
        other => panic!("{} is not a TCP label", other.name()),
    };
    flows.push(FlowConfig::new(Controller::Agent));
    let mut spec = TcpScenarioSpec::new(flows, rounds, seed);
    spec.name = Some(label.name().to_string());
    spec
}

/// 2A+1H, one ALOHA leaves at 2500, two join at 5000, a TDMA node on slots
/// {3, 5} joins at 7500; 10 000 frames. `heteronode` is `Agent` or `Aware`.
pub fn standard_dynamic(heteronode: NodeKind, seed: u64) -> ScenarioSpec {
    let aloha = || NodeConfig::new(NodeKind::Aloha { q: 0.2 });
    let mut spec = ScenarioSpec::new(
        vec![
            NodeConfig::new(heteronode),
            aloha(),
            aloha().leaving(2500),
            aloha().joining(5000),
            aloha().joining(5000),
            NodeConfig::new(NodeKind::Tdma { slots: vec![3, 5] }).joining(7500),
        ],
        10_000,
        seed,
    );
    spec.name = Some("dynamic".into());
    spec
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_build_valid_scenarios() {
        for l in Label::MAC {
            let s = mac_label_scenario(l, 100, 0);
            s.validate().unwrap();
            assert_eq!(s.agent_ids(), vec![s.nodes.len() as u32 - 1]);
        }
        for l in Label::TCP {
            tcp_label_scenario(l, 100, 0).validate().unwrap();
        }
        let d = mac_label_scenario(Label::Dynamic, 5, 0);
        assert_eq!(d.event_frames(), vec![250, 500, 750]);
        assert_eq!(standard_dynamic(NodeKind::Agent, 0).event_frames(), vec![2500, 5000, 7500]);
    }

    #[test]
    fn label_names_serialize() {
        assert_eq!(serde_json::to_string(&Label::TcpDynamic).unwrap(), "\"TCP-DYNAMIC\"");
    }
}
