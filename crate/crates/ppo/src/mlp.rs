use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Dense layer `y = W x + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// Feed-forward network with tanh hidden units and a linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Activations kept from a batched forward pass; column `j` is sample `j`.
#[derive(Clone, Debug)]
pub struct MlpCache {
    /// Input followed by every hidden activation.
    pub inputs: Vec<DMatrix<f64>>,
    pub output: DMatrix<f64>,
}

impl Mlp {
    /// Gaussian init with variance `1/fan_in`; the last layer is scaled by
    /// `out_gain`.
    pub fn new(widths: &[usize], out_gain: f64, rng: &mut impl Rng) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (widths[i], widths[i + 1]);
                let gain = if i + 1 == n { out_gain } else { 1.0 };
                let std = gain / (fan_in as f64).sqrt();
                let w = DMatrix::from_fn(fan_out, fan_in, |_, _| {
                    let z: f64 = StandardNormal.sample(rng);
                    z * std
                });
                Layer {
                    w,
                    b: DVector::zeros(fan_out),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    w: DMatrix::zeros(l.w.nrows(), l.w.ncols()),
                    b: DVector::zeros(l.b.len()),
                })
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.w.nrows())
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.w.nrows()));
        w
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> MlpCache {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.w * &a;
            for mut col in z.column_iter_mut() {
                col += &layer.b;
            }
            if i < last {
                z.apply(|v| *v = v.tanh());
            }
            inputs.push(std::mem::replace(&mut a, z));
        }
        MlpCache { inputs, output: a }
    }

    pub fn forward_one(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut a = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            a = &layer.w * a + &layer.b;
            if i < last {
                a.apply(|v| *v = v.tanh());
            }
        }
        a
    }

    /// Accumulates parameter gradients into `grads` given `d_out = ∂L/∂output`.
    pub fn backward(&self, cache: &MlpCache, d_out: DMatrix<f64>, grads: &mut Mlp) {
        let mut dz = d_out;
        for i in (0..self.layers.len()).rev() {
            let a_in = &cache.inputs[i];
            grads.layers[i].w.gemm(1.0, &dz, &a_in.transpose(), 1.0);
            for col in dz.column_iter() {
                grads.layers[i].b += col;
            }
            if i > 0 {
                let mut da = self.layers[i].w.transpose() * &dz;
                da.zip_apply(a_in, |d, a| *d *= 1.0 - a * a);
                dz = da;
            }
        }
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.w.as_slice());
            out.extend_from_slice(l.b.as_slice());
        }
    }

    /// Reads parameters back from `src`, returning the number consumed.
    pub fn unflatten_from(&mut self, src: &[f64]) -> usize {
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.as_mut_slice().copy_from_slice(&src[k..k + nw]);
            k += nw;
            let nb = l.b.len();
            l.b.as_mut_slice().copy_from_slice(&src[k..k + nb]);
            k += nb;
        }
        k
    }
}
