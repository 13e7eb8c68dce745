use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::mlp::Mlp;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_7;

/// Actor-critic pair: the actor outputs the pre-squash Gaussian mean, the
/// critic a scalar value. The log-std is state independent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub actor: Mlp,
    pub critic: Mlp,
    pub log_std: DVector<f64>,
}

/// Gradient with the same layout as [`PolicyNet`].
#[derive(Clone, Debug)]
pub struct PolicyGrads {
    pub actor: Mlp,
    pub critic: Mlp,
    pub log_std: DVector<f64>,
}

/// `Σ log(1 − tanh²(u))`, written to stay finite for large `|u|`.
pub fn squash_log_det(u: &[f64]) -> f64 {
    u.iter()
        .map(|&x| {
            let softplus = (-2.0 * x).max(0.0) + (-(2.0 * x).abs()).exp().ln_1p();
            2.0 * (std::f64::consts::LN_2 - x - softplus)
        })
        .sum()
}

impl PolicyNet {
    pub fn new(obs_dim: usize, action_dim: usize, hidden: &[usize], init_log_std: f64, rng: &mut impl Rng) -> Self {
        let mut widths = vec![obs_dim];
        widths.extend_from_slice(hidden);
        let mut actor_w = widths.clone();
        actor_w.push(action_dim);
        let mut critic_w = widths;
        critic_w.push(1);
        Self {
            actor: Mlp::new(&actor_w, 0.01, rng),
            critic: Mlp::new(&critic_w, 1.0, rng),
            log_std: DVector::from_element(action_dim, init_log_std),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn hidden(&self) -> Vec<usize> {
        let w = self.actor.widths();
        w[1..w.len() - 1].to_vec()
    }

    /// Log-std after clamping to `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub fn effective_log_std(&self) -> DVector<f64> {
        self.log_std.map(|s| s.clamp(LOG_STD_MIN, LOG_STD_MAX))
    }

    /// Pre-squash mean for each column of `obs`.
    pub fn mean_batch(&self, obs: &DMatrix<f64>) -> DMatrix<f64> {
        self.actor.forward(obs).output
    }

    pub fn value_batch(&self, obs: &DMatrix<f64>) -> DVector<f64> {
        self.critic.forward(obs).output.row(0).transpose()
    }

    pub fn value(&self, obs: &DVector<f64>) -> f64 {
        self.critic.forward_one(obs)[0]
    }

    /// Deterministic action `tanh(μ)`.
    pub fn act_deterministic(&self, obs: &DVector<f64>) -> DVector<f64> {
        self.actor.forward_one(obs).map(f64::tanh)
    }

    /// Log-density of the squashed action `tanh(u)` given the pre-squash
    /// sample `u`.
    pub fn log_prob(mean: &[f64], log_std: &[f64], u: &[f64]) -> f64 {
        let gauss: f64 = (0..u.len())
            .map(|i| {
                let z = (u[i] - mean[i]) / log_std[i].exp();
                -0.5 * z * z - log_std[i] - HALF_LOG_2PI
            })
            .sum();
        gauss - squash_log_det(u)
    }

    /// Draws `u ~ N(μ, σ²)` and returns `(u, tanh(u), log π)`.
    pub fn sample(&self, mean: &[f64], rng: &mut impl Rng) -> (DVector<f64>, DVector<f64>, f64) {
        let log_std = self.effective_log_std();
        let u = DVector::from_fn(mean.len(), |i, _| {
            let z: f64 = StandardNormal.sample(rng);
            mean[i] + log_std[i].exp() * z
        });
        let logp = Self::log_prob(mean, log_std.as_slice(), u.as_slice());
        let a = u.map(f64::tanh);
        (u, a, logp)
    }

    /// Entropy of the pre-squash Gaussian.
    pub fn entropy(&self) -> f64 {
        self.effective_log_std().iter().map(|s| s + 0.5 + HALF_LOG_2PI).sum()
    }

    pub fn zero_grads(&self) -> PolicyGrads {
        PolicyGrads {
            actor: self.actor.zeros_like(),
            critic: self.critic.zeros_like(),
            log_std: DVector::zeros(self.log_std.len()),
        }
    }

    pub fn param_count(&self) -> usize {
        self.actor.param_count() + self.critic.param_count() + self.log_std.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.actor.flatten_into(&mut out);
        self.critic.flatten_into(&mut out);
        out.extend_from_slice(self.log_std.as_slice());
        out
    }

    pub fn unflatten(&mut self, src: &[f64]) {
        assert_eq!(src.len(), self.param_count(), "parameter vector length");
        let mut k = self.actor.unflatten_from(src);
        k += self.critic.unflatten_from(&src[k..]);
        self.log_std.as_mut_slice().copy_from_slice(&src[k..]);
    }
}

impl PolicyGrads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.actor.flatten_into(&mut out);
        self.critic.flatten_into(&mut out);
        out.extend_from_slice(self.log_std.as_slice());
        out
    }
}
