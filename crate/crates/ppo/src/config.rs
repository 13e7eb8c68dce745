use serde::{Deserialize, Serialize};

use crate::error::{PpoError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Global gradient-norm cap; `0` disables it.
    pub max_grad_norm: f64,
    /// Environment steps (summed over all environments).
    pub total_steps: usize,
    pub n_envs: usize,
    /// Policy steps per environment per iteration.
    pub rollout_length: usize,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    /// Divide rewards by the running std of the discounted return.
    pub normalize_rewards: bool,
    /// Anneal the learning rate linearly to zero.
    pub anneal_lr: bool,
    /// Deterministic evaluation every this many iterations; `0` disables it.
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Stop once a deterministic evaluation reaches this success rate.
    pub target_success: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            epochs: 10,
            minibatch_size: 512,
            learning_rate: 3e-4,
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            total_steps: 2_000_000,
            n_envs: 32,
            rollout_length: 64,
            hidden: vec![64, 64],
            init_log_std: 0.0,
            normalize_rewards: true,
            anneal_lr: true,
            eval_interval: 10,
            eval_episodes: 50,
            target_success: None,
        }
    }
}

impl PpoConfig {
    /// Large network widths per task; torque control adds two 1024 layers.
    pub fn large_hidden(task_push: bool, torque: bool) -> Vec<usize> {
        let mut h = if task_push {
            vec![1024, 1024, 512, 256, 128]
        } else {
            vec![512, 256, 128, 64]
        };
        if torque {
            h.splice(0..0, [1024, 1024]);
        }
        h
    }

    pub fn batch_size(&self) -> usize {
        self.n_envs * self.rollout_length
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PpoError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be positive");
        }
        if self.n_envs == 0 || self.rollout_length == 0 || self.minibatch_size == 0 {
            return bad("n_envs, rollout_length and minibatch_size must be positive");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return bad("hidden widths must be positive");
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 || self.max_grad_norm < 0.0 {
            return bad("coefficients must be non-negative");
        }
        if let Some(t) = self.target_success {
            if !(0.0..=1.0).contains(&t) {
                return bad("target_success must lie in [0, 1]");
            }
        }
        Ok(())
    }
}
