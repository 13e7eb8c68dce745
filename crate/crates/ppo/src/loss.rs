use nalgebra::DMatrix;

use crate::config::PpoConfig;
use crate::error::{check_len, PpoError, Result};
use crate::policy::{PolicyGrads, PolicyNet, LOG_STD_MAX, LOG_STD_MIN};

/// One minibatch; column `i` of `obs` and `u` belongs to sample `i`.
#[derive(Clone, Debug)]
pub struct Batch {
    pub obs: DMatrix<f64>,
    /// Pre-squash actions.
    pub u: DMatrix<f64>,
    pub old_logp: Vec<f64>,
    pub adv: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.old_logp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.old_logp.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct LossOutput {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grads: PolicyGrads,
}

/// Clipped surrogate `min(r·A, clip(r, 1−ε, 1+ε)·A)` and its derivative in `r`.
pub fn surrogate(ratio: f64, adv: f64, eps: f64) -> (f64, f64) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
    if unclipped <= clipped {
        (unclipped, adv)
    } else {
        (clipped, 0.0)
    }
}

/// Clipped surrogate loss plus value regression minus entropy bonus, with
/// gradients for every parameter of `net`.
pub fn ppo_loss(batch: &Batch, net: &PolicyNet, cfg: &PpoConfig) -> Result<LossOutput> {
    let b = batch.len();
    if b == 0 {
        return Err(PpoError::EmptyBatch);
    }
    check_len("batch obs", b, batch.obs.ncols())?;
    check_len("batch actions", b, batch.u.ncols())?;
    check_len("batch advantages", b, batch.adv.len())?;
    check_len("batch returns", b, batch.returns.len())?;
    let bf = b as f64;
    let log_std = net.effective_log_std();
    let inv_var = log_std.map(|s| (-2.0 * s).exp());

    let actor = net.actor.forward(&batch.obs);
    let critic = net.critic.forward(&batch.obs);
    let mean = &actor.output;

    let mut grads = net.zero_grads();
    let mut d_mean = DMatrix::zeros(mean.nrows(), b);
    let mut d_value = DMatrix::zeros(1, b);
    let (mut policy_loss, mut value_loss, mut approx_kl, mut clipped) = (0.0, 0.0, 0.0, 0usize);
    for i in 0..b {
        let logp = PolicyNet::log_prob(
            mean.column(i).as_slice(),
            log_std.as_slice(),
            batch.u.column(i).as_slice(),
        );
        let log_ratio = logp - batch.old_logp[i];
        let ratio = log_ratio.exp();
        let (s, ds) = surrogate(ratio, batch.adv[i], cfg.clip);
        policy_loss -= s / bf;
        approx_kl += (ratio - 1.0 - log_ratio) / bf;
        if (ratio - 1.0).abs() > cfg.clip {
            clipped += 1;
        }
        let g = -ds * ratio / bf;
        for j in 0..mean.nrows() {
            let diff = batch.u[(j, i)] - mean[(j, i)];
            d_mean[(j, i)] = g * diff * inv_var[j];
            grads.log_std[j] += g * (diff * diff * inv_var[j] - 1.0);
        }
        let err = critic.output[(0, i)] - batch.returns[i];
        value_loss += err * err / bf;
        d_value[(0, i)] = cfg.value_coef * 2.0 * err / bf;
    }
    let entropy = net.entropy();
    for j in 0..grads.log_std.len() {
        let raw = net.log_std[j];
        if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) {
            grads.log_std[j] -= cfg.entropy_coef;
        } else {
            grads.log_std[j] = 0.0;
        }
    }
    net.actor.backward(&actor, d_mean, &mut grads.actor);
    net.critic.backward(&critic, d_value, &mut grads.critic);

    let loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy;
    if !loss.is_finite() {
        return Err(PpoError::NonFinite);
    }
    Ok(LossOutput {
        loss,
        policy_loss,
        value_loss,
        entropy,
        approx_kl,
        clip_fraction: clipped as f64 / bf,
        grads,
    })
}
