use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::gae::gae;
use crate::loss::Batch;

/// Transitions from `n_envs` environments over `length` steps, stored
/// step-major: entry `t·n_envs + e` is step `t` of environment `e`.
#[derive(Clone, Debug)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub length: usize,
    pub obs: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub logp: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// Value of the state after the last stored step, per environment.
    pub last_values: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(n_envs: usize, length: usize) -> Self {
        let cap = n_envs * length;
        Self {
            n_envs,
            length,
            obs: Vec::with_capacity(cap),
            u: Vec::with_capacity(cap),
            logp: Vec::with_capacity(cap),
            rewards: Vec::with_capacity(cap),
            values: Vec::with_capacity(cap),
            dones: Vec::with_capacity(cap),
            last_values: vec![0.0; n_envs],
        }
    }

    pub fn capacity(&self) -> usize {
        self.n_envs * self.length
    }

    pub fn len(&self) -> usize {
        self.logp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logp.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.capacity()
    }

    pub fn push(&mut self, obs: DVector<f64>, u: DVector<f64>, logp: f64, reward: f64, value: f64, done: bool) {
        debug_assert!(!self.is_full());
        self.obs.push(obs);
        self.u.push(u);
        self.logp.push(logp);
        self.rewards.push(reward);
        self.values.push(value);
        self.dones.push(done);
    }

    /// Advantages and returns in buffer order.
    pub fn advantages(&self, gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.len();
        let steps = n / self.n_envs;
        let mut adv = vec![0.0; n];
        let mut ret = vec![0.0; n];
        for e in 0..self.n_envs {
            let idx: Vec<usize> = (0..steps).map(|t| t * self.n_envs + e).collect();
            let r: Vec<f64> = idx.iter().map(|&i| self.rewards[i]).collect();
            let d: Vec<bool> = idx.iter().map(|&i| self.dones[i]).collect();
            let mut v: Vec<f64> = idx.iter().map(|&i| self.values[i]).collect();
            v.push(self.last_values[e]);
            let (a, g) = gae(&r, &v, &d, gamma, lambda)?;
            for (k, &i) in idx.iter().enumerate() {
                adv[i] = a[k];
                ret[i] = g[k];
            }
        }
        Ok((adv, ret))
    }

    pub fn batch(&self, indices: &[usize], adv: &[f64], returns: &[f64]) -> Batch {
        let obs_dim = self.obs[0].len();
        let act_dim = self.u[0].len();
        let mut obs = DMatrix::zeros(obs_dim, indices.len());
        let mut u = DMatrix::zeros(act_dim, indices.len());
        for (c, &i) in indices.iter().enumerate() {
            obs.set_column(c, &self.obs[i]);
            u.set_column(c, &self.u[i]);
        }
        Batch {
            obs,
            u,
            old_logp: indices.iter().map(|&i| self.logp[i]).collect(),
            adv: indices.iter().map(|&i| adv[i]).collect(),
            returns: indices.iter().map(|&i| returns[i]).collect(),
        }
    }

    pub fn clear(&mut self) {
        self.obs.clear();
        self.u.clear();
        self.logp.clear();
        self.rewards.clear();
        self.values.clear();
        self.dones.clear();
    }
}
