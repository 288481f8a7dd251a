use serde::{Deserialize, Serialize};

/// Tunables of the learning loop. Every field has a default, so a partial
/// JSON object is a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Query period in slots (MAC). The action is held constant in between.
    pub period_slots: u64,
    /// L∞ change below which two consecutive decisions count as unchanged.
    pub convergence_eps: f64,
    /// Consecutive unchanged periods before the action counts as converged.
    pub convergence_periods: u32,
    /// Shift in any outcome rate that signals a changed environment.
    pub rate_shift: f64,
    /// Utilization at or above which a slot is overused.
    pub theta_hi: f64,
    /// Observer window in frames (MAC).
    pub window_frames: u64,
    /// Per-period Gaussian perturbation of the action (MAC probabilities).
    pub sigma: f64,
    /// Resampling probability while escaping a converged action.
    pub escape_epsilon: f64,
    /// Maximum refinement rounds.
    pub n_max: u32,
    /// Materialization attempts per response, the first one included.
    pub asi_attempts: u32,
    /// Samples per demonstration set.
    pub demos_per_set: usize,
    /// Fairness parameter of the MAC objective.
    pub alpha: f64,
    /// Target as a fraction of the oracle objective: J_opt = J* - (1 - f)|J*|.
    pub target_fraction: f64,
    /// Target used when no oracle covers an evaluation scenario. Without
    /// one such scenarios never count as failing.
    pub absolute_target: Option<f64>,
    /// Target Jain index for TCP evaluation.
    pub tcp_target_jain: f64,
    /// Frames a demo action is run before its reward is read.
    pub demo_frames: u64,
    /// Length of one offline evaluation episode in frames.
    pub eval_frames: u64,
    pub eval_episodes: u32,
    /// Use the order-reversal ranker while forming strategies.
    pub ranker_offline: bool,
    /// Use the ranker for online node decisions.
    pub ranker_online: bool,
    /// Send observer findings through the backend instead of rendering them locally.
    pub observer_via_backend: bool,
    pub tracing: bool,
    /// Window of the throughput series used for RMSE, in frames.
    pub rmse_window: u64,
    pub rmse_warmup: u64,
    pub tcp: TcpAgentConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            period_slots: 100,
            convergence_eps: 0.02,
            convergence_periods: 3,
            rate_shift: 0.1,
            theta_hi: 0.9,
            window_frames: 100,
            sigma: 0.05,
            escape_epsilon: 0.02,
            n_max: 5,
            asi_attempts: 3,
            demos_per_set: 8,
            alpha: 1.0,
            target_fraction: 0.95,
            absolute_target: None,
            tcp_target_jain: 0.95,
            demo_frames: 200,
            eval_frames: 1000,
            eval_episodes: 2,
            ranker_offline: true,
            ranker_online: false,
            observer_via_backend: false,
            tracing: true,
            rmse_window: 100,
            rmse_warmup: 500,
            tcp: TcpAgentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TcpAgentConfig {
    pub period_rounds: u64,
    pub window_rounds: u64,
    /// Perturbation of the window in packets.
    pub sigma: f64,
    /// Loss-round fraction at which the loss trigger fires.
    pub loss_threshold: f64,
    pub demo_rounds: u64,
    pub eval_rounds: u64,
}

impl Default for TcpAgentConfig {
    fn default() -> Self {
        TcpAgentConfig {
            period_rounds: 5,
            window_rounds: 40,
            sigma: 0.3,
            loss_threshold: 0.02,
            demo_rounds: 300,
            eval_rounds: 600,
        }
    }
}

impl AgentConfig {
    /// Query period in frames, at least one.
    pub fn period_frames(&self, frame_len: usize) -> u64 {
        (self.period_slots / frame_len as u64).max(1)
    }

    pub fn target_for(&self, oracle_objective: f64) -> f64 {
        oracle_objective - (1.0 - self.target_fraction) * oracle_objective.abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_uses_defaults() {
        let c: AgentConfig = serde_json::from_str(r#"{"sigma": 0.1, "tcp": {"period_rounds": 7}}"#).unwrap();
        assert_eq!(c.sigma, 0.1);
        assert_eq!(c.period_slots, 100);
        assert_eq!(c.tcp.period_rounds, 7);
        assert_eq!(c.tcp.window_rounds, 40);
    }

    #[test]
    fn target_handles_negative_objectives() {
        let c = AgentConfig::default();
        assert!((c.target_for(10.0) - 9.5).abs() < 1e-12);
        assert!((c.target_for(-10.0) + 10.5).abs() < 1e-12);
    }
}
