use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Running per-dimension mean and variance (parallel Welford merge).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub mean: DVector<f64>,
    pub var: DVector<f64>,
    pub count: f64,
    pub clip: f64,
    pub frozen: bool,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            var: DVector::from_element(dim, 1.0),
            count: 0.0,
            clip: 10.0,
            frozen: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn update(&mut self, batch: &[DVector<f64>]) {
        if self.frozen || batch.is_empty() {
            return;
        }
        let n = batch.len() as f64;
        let mut mean = DVector::zeros(self.dim());
        for x in batch {
            mean += x;
        }
        mean /= n;
        let mut var = DVector::zeros(self.dim());
        for x in batch {
            var += (x - &mean).map(|d| d * d);
        }
        var /= n;
        if self.count == 0.0 {
            self.mean = mean;
            self.var = var;
            self.count = n;
            return;
        }
        let total = self.count + n;
        let delta = &mean - &self.mean;
        let m2 = &self.var * self.count + var * n + delta.map(|d| d * d) * (self.count * n / total);
        self.mean += delta * (n / total);
        self.var = m2 / total;
        self.count = total;
    }

    pub fn normalize(&self, x: &DVector<f64>) -> DVector<f64> {
        let c = self.clip;
        DVector::from_fn(x.len(), |i, _| {
            ((x[i] - self.mean[i]) / (self.var[i] + 1e-8).sqrt()).clamp(-c, c)
        })
    }
}

/// Running variance of a scalar stream, used to scale rewards by the spread
/// of the discounted return.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningScalar {
    pub mean: f64,
    pub var: f64,
    pub count: f64,
}

impl Default for RunningScalar {
    fn default() -> Self {
        Self {
            mean: 0.0,
            var: 1.0,
            count: 0.0,
        }
    }
}

impl RunningScalar {
    pub fn update(&mut self, xs: &[f64]) {
        if xs.is_empty() {
            return;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        if self.count == 0.0 {
            (self.mean, self.var, self.count) = (mean, var, n);
            return;
        }
        let total = self.count + n;
        let delta = mean - self.mean;
        self.var = (self.var * self.count + var * n + delta * delta * self.count * n / total) / total;
        self.mean += delta * n / total;
        self.count = total;
    }

    pub fn std(&self) -> f64 {
        (self.var + 1e-8).sqrt()
    }
}
