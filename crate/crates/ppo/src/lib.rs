//! PPO with generalized advantage estimation over vectorized task
//! environments.

mod adam;
mod buffer;
mod checkpoint;
mod config;
mod error;
mod gae;
mod loss;
mod mlp;
mod normalizer;
mod policy;
mod trainer;

pub use adam::Adam;
pub use buffer::RolloutBuffer;
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::PpoConfig;
pub use error::{PpoError, Result};
pub use gae::{gae, normalize_advantages};
pub use loss::{ppo_loss, surrogate, Batch, LossOutput};
pub use mlp::{Layer, Mlp, MlpCache};
pub use normalizer::{RunningNorm, RunningScalar};
pub use policy::{squash_log_det, PolicyGrads, PolicyNet, LOG_STD_MAX, LOG_STD_MIN};
pub use trainer::{evaluate, train, CurvePoint, EvalSummary, TrainOutcome, Trainer};

#[cfg(test)]
mod tests;
