use std::path::Path;

use aspace_core::action::ControllerConfig;
use aspace_core::task::{Observation, TaskConfig};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::config::PpoConfig;
use crate::error::{PpoError, Result};
use crate::normalizer::RunningNorm;
use crate::policy::PolicyNet;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to run a trained policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub space: String,
    pub task: TaskConfig,
    pub controller: ControllerConfig,
    pub ppo: PpoConfig,
    pub seed: u64,
    pub iteration: usize,
    pub env_steps: usize,
    /// Mean training episode reward when this snapshot was taken.
    pub episode_reward: Option<f64>,
    pub hidden: Vec<usize>,
    pub policy: PolicyNet,
    pub obs_norm: RunningNorm,
}

impl Checkpoint {
    /// Deterministic action for a raw observation, using the frozen
    /// normalizer.
    pub fn act(&self, obs: &Observation) -> DVector<f64> {
        self.act_vector(&obs.to_vector())
    }

    pub fn act_vector(&self, raw: &DVector<f64>) -> DVector<f64> {
        self.policy.act_deterministic(&self.obs_norm.normalize(raw))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec(self)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(PpoError::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        if ck.policy.obs_dim() != ck.obs_norm.dim() {
            return Err(PpoError::Checkpoint("normalizer and policy disagree on observation size".into()));
        }
        Ok(ck)
    }
}
