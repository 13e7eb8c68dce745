use nalgebra::{DVector, Rotation3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::env::TaskEnv;
use super::TaskKind;
use crate::action::{BaseVariable, Feedback, TargetMode};
use crate::dynamics::gravity_torque;
use crate::error::Result;
use crate::robot::orientation::to_6d;
use crate::robot::solve_position_ik;

/// Hand-written goal-seeking policy for any action space.
///
/// It solves IK for the episode goal once and then emits whatever action
/// moves the space's target toward that goal: the goal itself for scaled
/// position spaces, a proportional velocity for velocity spaces and the
/// largest allowed step for delta spaces. Used to record matched logs
/// across spaces.
#[derive(Clone, Debug)]
pub struct ScriptedPolicy {
    q_goal: DVector<f64>,
    x_goal: Vector3<f64>,
    r_goal: Rotation3<f64>,
    /// Gain of the velocity laws (1/s).
    pub gain: f64,
    /// Stiffness and damping of the torque law.
    pub torque_gains: (f64, f64),
}

impl ScriptedPolicy {
    /// Plans for the episode `env` was last reset to.
    pub fn new(env: &TaskEnv) -> Result<Self> {
        let model = env.model();
        let q0 = env.state().joints.q.clone();
        let target = match env.task() {
            TaskKind::Reach => env.goal(),
            TaskKind::Push => env.object_reference(),
        };
        let (q_goal, _) = solve_position_ik(model, &q0, &target, 200)?;
        let pose = crate::robot::forward_kinematics(model, &q_goal)?;
        Ok(Self {
            q_goal,
            x_goal: target,
            r_goal: pose.orientation,
            gain: 4.0,
            torque_gains: (60.0, 8.0),
        })
    }

    pub fn q_goal(&self) -> &DVector<f64> {
        &self.q_goal
    }

    pub fn action(&self, env: &TaskEnv) -> Result<DVector<f64>> {
        let model = env.model();
        let ctrl = env.controller();
        let space = ctrl.space();
        let kind = space.kind();
        let fb = Feedback::new(model, env.state().joints.clone())?;
        let q = &fb.joints.q;
        let Some(base) = kind.base() else {
            let (k, d) = self.torque_gains;
            let tau = (&self.q_goal - q) * k - &fb.joints.dq * d + gravity_torque(model, q)?;
            return Ok(tau.component_div(model.tau_max()).map(|v| v.clamp(-1.0, 1.0)));
        };
        let desired = match base {
            BaseVariable::JointPosition => self.q_goal.clone(),
            BaseVariable::JointVelocity => (&self.q_goal - q) * self.gain,
            BaseVariable::CartesianPosition => {
                let six = to_6d(&self.r_goal);
                let mut v = DVector::zeros(9);
                v.rows_mut(0, 3).copy_from(&self.x_goal);
                for (i, s) in six.iter().enumerate() {
                    v[3 + i] = *s;
                }
                v
            }
            BaseVariable::CartesianVelocity => {
                let lin = (self.x_goal - fb.pose.position) * self.gain;
                DVector::from_vec(vec![lin.x, lin.y, lin.z, 0.0, 0.0, 0.0])
            }
        };
        let (lo, hi) = space.limits();
        let a = match kind.mode() {
            TargetMode::Scaled => DVector::from_fn(desired.len(), |i, _| 2.0 * (desired[i] - lo[i]) / (hi[i] - lo[i]) - 1.0),
            mode => {
                let c = space.delta_rate().expect("delta spaces have a rate");
                let reference = if mode == TargetMode::OneStep {
                    space.feedback_value(&fb)
                } else {
                    space.state().v_d.clone()
                };
                let dt = crate::policy_dt();
                DVector::from_fn(desired.len(), |i, _| (desired[i] - reference[i]) / (c[i] * dt))
            }
        };
        Ok(a.map(|v| v.clamp(-1.0, 1.0)))
    }

    /// [`action`](Self::action) plus Gaussian noise of standard deviation
    /// `sigma`, clipped to the action interval.
    pub fn noisy_action(&self, env: &TaskEnv, sigma: f64, rng: &mut impl Rng) -> Result<DVector<f64>> {
        let a = self.action(env)?;
        if sigma <= 0.0 {
            return Ok(a);
        }
        let normal = Normal::new(0.0, sigma).map_err(|e| crate::error::Error::InvalidConfig(e.to_string()))?;
        Ok(a.map(|v| (v + normal.sample(rng)).clamp(-1.0, 1.0)))
    }
}
