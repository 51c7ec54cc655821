//! Training hyperparameters and their JSON configuration form.
//!
//! Keys are the snake_case field names; the upper-case names used in the
//! hyperparameter table (`BATCH_SIZE`, `LR`, `EPSILON`, ...) are accepted as
//! aliases. Missing keys take the defaults below.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imu_io::N_STATES;
use crate::modulation::{PidGains, RewardKind};
use crate::qnet::{OptimizerKind, HIDDEN, N_ACTIONS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    #[serde(alias = "BATCH_SIZE")]
    pub batch_size: usize,
    #[serde(alias = "LR")]
    pub lr: f64,
    /// Probability of taking the greedy action.
    #[serde(alias = "EPSILON")]
    pub epsilon: f64,
    /// Discount factor.
    #[serde(alias = "GAMMA")]
    pub gamma: f64,
    #[serde(alias = "TARGET_REPLACE_ITER")]
    pub target_replace_iter: u64,
    #[serde(alias = "MEMORY_CAPACITY")]
    pub memory_capacity: usize,
    #[serde(alias = "N_ACTIONS")]
    pub n_actions: usize,
    #[serde(alias = "N_STATES")]
    pub n_states: usize,
    pub hidden_nodes: usize,
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    #[serde(alias = "reward_function")]
    pub reward_kind: RewardKind,
    pub episodes: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Wait until the replay buffer is full before the first update.
    pub learn_after_full: bool,
    /// Z-score each state channel using statistics of the trajectory being run.
    pub normalize_states: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        let gains = PidGains::default();
        Self {
            batch_size: 32,
            lr: 0.001,
            epsilon: 0.9,
            gamma: 0.9,
            target_replace_iter: 100,
            memory_capacity: 2000,
            n_actions: N_ACTIONS,
            n_states: N_STATES,
            hidden_nodes: HIDDEN,
            kp: gains.kp,
            ki: gains.ki,
            kd: gains.kd,
            reward_kind: RewardKind::Sigmoid,
            episodes: 20,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            learn_after_full: false,
            normalize_states: false,
        }
    }
}

impl Hyperparams {
    pub fn gains(&self) -> PidGains {
        PidGains {
            kp: self.kp,
            ki: self.ki,
            kd: self.kd,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let hp: Self =
            serde_json::from_str(text).map_err(|e| Error::usage(format!("invalid config: {e}")))?;
        hp.validate()?;
        Ok(hp)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("hyperparameters serialize")
    }

    /// Check ranges and that the network shape matches the fixed architecture.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.batch_size == 0 {
            bad.push("batch_size must be positive".to_string());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            bad.push(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            bad.push(format!("epsilon must lie in [0, 1], got {}", self.epsilon));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            bad.push(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if self.target_replace_iter == 0 {
            bad.push("target_replace_iter must be positive".to_string());
        }
        if self.memory_capacity == 0 {
            bad.push("memory_capacity must be positive".to_string());
        }
        if self.episodes == 0 {
            bad.push("episodes must be positive".to_string());
        }
        if ![self.kp, self.ki, self.kd].iter().all(|g| g.is_finite()) {
            bad.push("PID gains must be finite".to_string());
        }
        if !bad.is_empty() {
            return Err(Error::usage(bad.join("; ")));
        }
        self.check_shapes()
    }

    /// Shape agreement with the compiled network; a mismatch is a data error.
    pub fn check_shapes(&self) -> Result<()> {
        if (self.n_states, self.hidden_nodes, self.n_actions) != (N_STATES, HIDDEN, N_ACTIONS) {
            return Err(Error::data(format!(
                "network shape {}x{}x{} does not match the supported {N_STATES}x{HIDDEN}x{N_ACTIONS}",
                self.n_states, self.hidden_nodes, self.n_actions
            )));
        }
        Ok(())
    }
}
