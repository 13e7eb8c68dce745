//! Scalar control laws shared by every action space.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Diagonal joint stiffness and damping of the impedance controller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub k: DVector<f64>,
    pub d: DVector<f64>,
}

impl Gains {
    pub fn isotropic(n: usize, k: f64, d: f64) -> Self {
        Self {
            k: DVector::from_element(n, k),
            d: DVector::from_element(n, d),
        }
    }

    /// `D = 2·√K`.
    pub fn critically_damped(n: usize, k: f64) -> Self {
        Self::isotropic(n, k, 2.0 * k.sqrt())
    }
}

/// Step size of the delta action spaces: targets move by at most `c·dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaConfig {
    /// Per-dimension rate (units of the target per second per unit action).
    pub c: DVector<f64>,
    pub dt: f64,
}

/// Affine map of `a ∈ [−1, 1]` onto `[lo, hi]`; components outside the
/// action interval are clipped first.
pub fn scale_action(a: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        a.len(),
        (0..a.len()).map(|i| {
            let u = a[i].clamp(-1.0, 1.0);
            lo[i] + 0.5 * (u + 1.0) * (hi[i] - lo[i])
        }),
    )
}

/// `clip(ref + c·a·dt, lo, hi)`.
///
/// Actions are clipped to [−1, 1]. For a reference inside the limits the
/// result never moves further than `c·dt` from it in any component; the
/// sum is nudged by one ulp toward the reference when rounding would
/// otherwise overshoot that bound.
pub fn delta_update(
    reference: &DVector<f64>,
    a: &DVector<f64>,
    cfg: &DeltaConfig,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> DVector<f64> {
    DVector::from_iterator(
        a.len(),
        (0..a.len()).map(|i| {
            let r = reference[i];
            let bound = cfg.c[i] * cfg.dt;
            let step = cfg.c[i] * a[i].clamp(-1.0, 1.0) * cfg.dt;
            let mut v = r + step;
            while (v - r).abs() > bound {
                v = if v > r { v.next_down() } else { v.next_up() };
            }
            v.clamp(lo[i], hi[i])
        }),
    )
}

/// Joint impedance law `τ = K·(q_d − q) + D·(q̇_d − q̇)`.
pub fn jic_torque(
    gains: &Gains,
    q_d: &DVector<f64>,
    dq_d: &DVector<f64>,
    q: &DVector<f64>,
    dq: &DVector<f64>,
) -> DVector<f64> {
    gains.k.component_mul(&(q_d - q)) + gains.d.component_mul(&(dq_d - dq))
}
