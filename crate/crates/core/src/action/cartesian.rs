use std::sync::Arc;

use nalgebra::{DVector, Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::impedance::TargetVariable;
use super::joint::integrate_joint_target;
use super::{BaseVariable, ControllerState, Feedback};
use crate::robot::orientation::{euler_rate_matrix, from_6d, rotation_error, to_6d, to_euler_xyz};
use crate::robot::{ik_velocity_with_jacobian, Pose, RobotModel, Twist};

/// Parameters shared by the IK-based spaces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkConfig {
    /// Damping λ of the least-squares pseudo-inverse.
    pub ik_damping: f64,
    /// Gain of the pull toward the default posture in the null space.
    pub null_space_gain: f64,
    /// Proportional gain K_p of the Cartesian position law (1/s).
    pub cartesian_gain: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            ik_damping: 1e-2,
            null_space_gain: 1.0,
            cartesian_gain: 5.0,
        }
    }
}

fn ik_step(model: &RobotModel, ik: &IkConfig, st: &mut ControllerState, fb: &Feedback, twist: &Twist) {
    st.dq_d = ik_velocity_with_jacobian(model, &fb.joints.q, &fb.jacobian, twist, ik.ik_damping, ik.null_space_gain);
    integrate_joint_target(model, st);
}

fn clamp_norm(v: Vector3<f64>, max: f64) -> Vector3<f64> {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

/// Euler angle rates to world angular velocity at the current orientation.
fn euler_rates_to_omega(rot: &Rotation3<f64>, rates: &Vector3<f64>) -> Vector3<f64> {
    euler_rate_matrix(&to_euler_xyz(rot).angles) * rates
}

fn omega_to_euler_rates(rot: &Rotation3<f64>, omega: &Vector3<f64>) -> Vector3<f64> {
    let e: Matrix3<f64> = euler_rate_matrix(&to_euler_xyz(rot).angles);
    match e.try_inverse() {
        Some(inv) => inv * omega,
        None => e.pseudo_inverse(1e-9).map(|p| p * omega).unwrap_or_else(|_| Vector3::zeros()),
    }
}

/// End-effector twist target `[v; Euler rates]`, mapped to joints by IK
/// every control step and integrated like a joint velocity target.
#[derive(Clone, Debug)]
pub struct CartesianVelocity {
    model: Arc<RobotModel>,
    ik: IkConfig,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl CartesianVelocity {
    pub fn new(model: Arc<RobotModel>, ik: IkConfig) -> Self {
        let c = model.cartesian();
        let upper = DVector::from_vec(vec![c.lin_vel, c.lin_vel, c.lin_vel, c.ang_vel, c.ang_vel, c.ang_vel]);
        Self {
            lower: -&upper,
            upper,
            model,
            ik,
        }
    }

    fn twist_target(&self, v_d: &DVector<f64>, fb: &Feedback) -> Twist {
        let rates = Vector3::new(v_d[3], v_d[4], v_d[5]);
        Twist {
            linear: Vector3::new(v_d[0], v_d[1], v_d[2]),
            angular: euler_rates_to_omega(&fb.pose.orientation, &rates),
        }
    }
}

impl TargetVariable for CartesianVelocity {
    fn base(&self) -> BaseVariable {
        BaseVariable::CartesianVelocity
    }

    fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    fn derivative_bound(&self) -> DVector<f64> {
        let c = self.model.cartesian();
        DVector::from_vec(vec![c.lin_acc, c.lin_acc, c.lin_acc, c.ang_acc, c.ang_acc, c.ang_acc])
    }

    fn feedback(&self, fb: &Feedback) -> DVector<f64> {
        let rates = omega_to_euler_rates(&fb.pose.orientation, &fb.twist.angular);
        let l = fb.twist.linear;
        DVector::from_vec(vec![l.x, l.y, l.z, rates.x, rates.y, rates.z])
    }

    fn on_target(&self, _st: &mut ControllerState, _fb: &Feedback) {}

    fn joint_targets(&self, st: &mut ControllerState, fb: &Feedback) -> (DVector<f64>, DVector<f64>) {
        let twist = self.twist_target(&st.v_d, fb);
        ik_step(&self.model, &self.ik, st, fb, &twist);
        (st.q_d.clone(), st.dq_d.clone())
    }
}

/// End-effector pose target `[p; 6D orientation]`, tracked through the
/// proportional law `ẋ_d = K_p·[p_d − p; log(R_d·Rᵀ)]` and IK.
#[derive(Clone, Debug)]
pub struct CartesianPosition {
    model: Arc<RobotModel>,
    ik: IkConfig,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl CartesianPosition {
    pub fn new(model: Arc<RobotModel>, ik: IkConfig) -> Self {
        let c = model.cartesian();
        let mut lower = DVector::from_element(9, -1.0);
        let mut upper = DVector::from_element(9, 1.0);
        for i in 0..3 {
            lower[i] = c.pos_min[i];
            upper[i] = c.pos_max[i];
        }
        Self { model, ik, lower, upper }
    }

    /// Pose encoded by a target vector. A degenerate 6D part keeps the
    /// orientation of `fallback`.
    pub fn decode(v: &DVector<f64>, fallback: &Rotation3<f64>) -> Pose {
        let six = [v[3], v[4], v[5], v[6], v[7], v[8]];
        Pose {
            position: Vector3::new(v[0], v[1], v[2]),
            orientation: from_6d(&six).unwrap_or(*fallback),
        }
    }

    /// Proportional twist toward `target`, limited to the Cartesian speed
    /// bounds.
    pub fn twist_toward(&self, target: &Pose, current: &Pose) -> Twist {
        let c = self.model.cartesian();
        let kp = self.ik.cartesian_gain;
        Twist {
            linear: clamp_norm((target.position - current.position) * kp, c.lin_vel),
            angular: clamp_norm(rotation_error(&target.orientation, &current.orientation) * kp, c.ang_vel),
        }
    }
}

impl TargetVariable for CartesianPosition {
    fn base(&self) -> BaseVariable {
        BaseVariable::CartesianPosition
    }

    fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    fn derivative_bound(&self) -> DVector<f64> {
        let c = self.model.cartesian();
        let mut d = DVector::from_element(9, c.ang_vel);
        for i in 0..3 {
            d[i] = c.lin_vel;
        }
        d
    }

    fn feedback(&self, fb: &Feedback) -> DVector<f64> {
        let p = fb.pose.position;
        let six = to_6d(&fb.pose.orientation);
        let mut v = DVector::zeros(9);
        v[0] = p.x;
        v[1] = p.y;
        v[2] = p.z;
        for (i, s) in six.iter().enumerate() {
            v[3 + i] = *s;
        }
        v
    }

    fn on_target(&self, st: &mut ControllerState, fb: &Feedback) {
        let fallback = st.x_d.as_ref().map_or(fb.pose.orientation, |p| p.orientation);
        st.x_d = Some(Self::decode(&st.v_d, &fallback));
    }

    fn joint_targets(&self, st: &mut ControllerState, fb: &Feedback) -> (DVector<f64>, DVector<f64>) {
        let target = st.x_d.clone().unwrap_or_else(|| fb.pose.clone());
        let twist = self.twist_toward(&target, &fb.pose);
        ik_step(&self.model, &self.ik, st, fb, &twist);
        (st.q_d.clone(), st.dq_d.clone())
    }
}
