//! Deployment-time target filters and the motion-constraint checker.
//!
//! Filters run only in deployment mode (evaluation and replay); training
//! rollouts see the raw controller so the transition stays Markov in the
//! observation.

use nalgebra::DVector;

use crate::robot::RobotModel;

/// Cut-off of the first-order low-pass filter (Hz).
pub const LOW_PASS_CUTOFF_HZ: f64 = 5.0;

/// Relative slack the rate limiter keeps from every bound so that rounding
/// in the finite differences cannot report a violation.
const LIMIT_MARGIN: f64 = 1.0 - 1e-9;

/// Per-joint velocity, acceleration and jerk bounds evaluated on position
/// samples spaced `dt` apart.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet {
    pub dq_max: DVector<f64>,
    pub ddq_max: DVector<f64>,
    pub dddq_max: DVector<f64>,
    pub dt: f64,
}

impl ConstraintSet {
    pub fn from_model(model: &RobotModel, dt: f64) -> Self {
        Self {
            dq_max: model.dq_max().clone(),
            ddq_max: model.ddq_max().clone(),
            dddq_max: model.dddq_max().clone(),
            dt,
        }
    }

    pub fn len(&self) -> usize {
        self.dq_max.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dq_max.is_empty()
    }
}

/// Which constraint families are violated at one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ViolationFlags {
    pub velocity: bool,
    pub acceleration: bool,
    pub jerk: bool,
}

impl ViolationFlags {
    pub fn any(&self) -> bool {
        self.velocity || self.acceleration || self.jerk
    }
}

/// Backward differences of the newest sample in `[.., p3, p2, p1, p0]`.
/// Returns (velocity, acceleration, jerk); missing history yields `None`.
fn backward_differences(window: &[f64], dt: f64) -> (Option<f64>, Option<f64>, Option<f64>) {
    let n = window.len();
    let at = |k: usize| window[n - 1 - k];
    let d1 = |k: usize| at(k) - at(k + 1);
    let vel = (n >= 2).then(|| d1(0) / dt);
    let acc = (n >= 3).then(|| (d1(0) - d1(1)) / (dt * dt));
    let jerk = (n >= 4).then(|| ((d1(0) - d1(1)) - (d1(1) - d1(2))) / (dt * dt * dt));
    (vel, acc, jerk)
}

/// Relative slack absorbing rounding in the finite differences.
const CHECK_SLACK: f64 = 1.0 + 1e-9;

/// Flags for the newest sample of a window of joint positions (oldest
/// first). Constraints whose difference needs more samples than available
/// count as satisfied.
pub fn check_constraints(window: &[DVector<f64>], cs: &ConstraintSet) -> ViolationFlags {
    let mut flags = ViolationFlags::default();
    let start = window.len().saturating_sub(4);
    let window = &window[start..];
    if window.len() < 2 {
        return flags;
    }
    let mut scalar = [0.0; 4];
    for i in 0..cs.len() {
        for (k, q) in window.iter().enumerate() {
            scalar[k] = q[i];
        }
        let (v, a, j) = backward_differences(&scalar[..window.len()], cs.dt);
        let over = |x: Option<f64>, lim: f64| x.is_some_and(|x| x.abs() > lim * CHECK_SLACK);
        flags.velocity |= over(v, cs.dq_max[i]);
        flags.acceleration |= over(a, cs.ddq_max[i]);
        flags.jerk |= over(j, cs.dddq_max[i]);
    }
    flags
}

/// Memory of the low-pass filter and the last three rate-limited outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    pub low_pass: DVector<f64>,
    /// Previous outputs, newest first.
    pub history: [DVector<f64>; 3],
}

impl FilterState {
    /// Starts at rest at the given configuration.
    pub fn new(q: &DVector<f64>) -> Self {
        Self {
            low_pass: q.clone(),
            history: [q.clone(), q.clone(), q.clone()],
        }
    }

    pub fn reset(&mut self, q: &DVector<f64>) {
        *self = Self::new(q);
    }

    pub fn last_output(&self) -> &DVector<f64> {
        &self.history[0]
    }
}

/// First-order exponential smoothing, `α = dt / (τ + dt)` with
/// `τ = 1 / (2π·5 Hz)`.
pub fn low_pass(state: &mut FilterState, target: &DVector<f64>, dt: f64) -> DVector<f64> {
    let tau = 1.0 / (2.0 * std::f64::consts::PI * LOW_PASS_CUTOFF_HZ);
    let alpha = dt / (tau + dt);
    let out = &state.low_pass + (target - &state.low_pass) * alpha;
    state.low_pass = out.clone();
    out
}

/// Future velocity gain while ramping the acceleration `a > 0` down to zero
/// at the jerk limit `h = J·dt` per step: `dt·Σ_{k≥1} max(a − k·h, 0)`.
fn ramp_down_gain(a: f64, h: f64, dt: f64) -> f64 {
    if a <= h {
        return 0.0;
    }
    let n = ((a / h).ceil() - 1.0).max(0.0);
    dt * (n * a - h * n * (n + 1.0) / 2.0)
}

/// Bisection for the boundary of a monotone predicate on `[lo, hi]`;
/// `pred(lo)` is assumed true, returns the largest point where it holds.
fn last_true(lo: f64, hi: f64, pred: impl Fn(f64) -> bool) -> f64 {
    if pred(hi) {
        return hi;
    }
    let (mut good, mut bad) = (lo, hi);
    for _ in 0..80 {
        let mid = 0.5 * (good + bad);
        if pred(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    good
}

struct JointLimits {
    v: f64,
    a: f64,
    j: f64,
    lo: f64,
    hi: f64,
}

fn limit_joint(history: [f64; 3], target: f64, lim: &JointLimits, dt: f64) -> f64 {
    let [y1, y2, y3] = history;
    let x = target.clamp(lim.lo, lim.hi);
    let v1 = (y1 - y2) / dt;
    let a1 = ((y1 - y2) - (y2 - y3)) / (dt * dt);
    let (vmax, amax, jmax) = (lim.v * LIMIT_MARGIN, lim.a * LIMIT_MARGIN, lim.j * LIMIT_MARGIN);
    let h = jmax * dt;

    let mut lo = (-amax).max(a1 - h);
    let mut hi = amax.min(a1 + h);
    if lo > hi {
        // only reachable from a state that already broke a bound
        let mid = 0.5 * (lo + hi);
        lo = mid;
        hi = mid;
    }
    // velocity stays within ±vmax even while the acceleration ramps back to 0
    let peak = |a: f64| v1 + a * dt + ramp_down_gain(a, h, dt);
    let trough = |a: f64| v1 + a * dt - ramp_down_gain(-a, h, dt);
    let upper = if peak(lo) <= vmax { last_true(lo, hi, |a| peak(a) <= vmax) } else { lo };
    let lower = if trough(hi) >= -vmax { -last_true(-hi, -lo, |na| trough(-na) >= -vmax) } else { hi };
    let (lo_a, hi_a) = if lower <= upper { (lower, upper) } else { (upper, upper) };

    let window = [y3, y2, y1, x];
    let (v, a, j) = backward_differences(&window, dt);
    let (v, a, j) = (v.unwrap(), a.unwrap(), j.unwrap());
    if v.abs() <= vmax && a.abs() <= amax && j.abs() <= jmax && a >= lo_a && a <= hi_a {
        return x;
    }
    let a_star = ((x - y1) / dt - v1) / dt;
    let a = a_star.clamp(lo_a, hi_a);
    y1 + (v1 + a * dt) * dt
}

/// Clamps a joint-position target stream so that its backward differences
/// respect the velocity, acceleration and jerk bounds.
///
/// The target is first clamped to `[q_min, q_max]`. The next acceleration is
/// then restricted to the jerk and acceleration bounds and to the set from
/// which the velocity can still be brought back inside its bound without
/// exceeding the jerk limit, so the output never violates any constraint.
/// Targets that already satisfy every bound pass through unchanged.
pub fn rate_limit(
    state: &mut FilterState,
    target: &DVector<f64>,
    limits: &ConstraintSet,
    q_min: &DVector<f64>,
    q_max: &DVector<f64>,
) -> DVector<f64> {
    let dt = limits.dt;
    let out = DVector::from_iterator(
        target.len(),
        (0..target.len()).map(|i| {
            let lim = JointLimits {
                v: limits.dq_max[i],
                a: limits.ddq_max[i],
                j: limits.dddq_max[i],
                lo: q_min[i],
                hi: q_max[i],
            };
            let hist = [state.history[0][i], state.history[1][i], state.history[2][i]];
            limit_joint(hist, target[i], &lim, dt)
        }),
    );
    state.history.rotate_right(1);
    state.history[0] = out.clone();
    out
}
