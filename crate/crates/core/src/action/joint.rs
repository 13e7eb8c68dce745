use std::sync::Arc;

use nalgebra::DVector;

use super::impedance::TargetVariable;
use super::{BaseVariable, ControllerState, Feedback};
use crate::robot::RobotModel;

/// `q_d` from the action; `q̇_d` by differencing consecutive targets over
/// the policy period.
#[derive(Clone, Debug)]
pub struct JointPosition {
    model: Arc<RobotModel>,
}

impl JointPosition {
    pub fn new(model: Arc<RobotModel>) -> Self {
        Self { model }
    }
}

impl TargetVariable for JointPosition {
    fn base(&self) -> BaseVariable {
        BaseVariable::JointPosition
    }

    fn lower(&self) -> &DVector<f64> {
        self.model.q_min()
    }

    fn upper(&self) -> &DVector<f64> {
        self.model.q_max()
    }

    fn derivative_bound(&self) -> DVector<f64> {
        self.model.dq_max().clone()
    }

    fn feedback(&self, fb: &Feedback) -> DVector<f64> {
        fb.joints.q.clone()
    }

    fn on_target(&self, st: &mut ControllerState, _fb: &Feedback) {
        st.dq_d = (&st.v_d - &st.q_d_prev) / crate::policy_dt();
        st.q_d = st.v_d.clone();
        st.q_d_prev = st.v_d.clone();
    }

    fn joint_targets(&self, st: &mut ControllerState, _fb: &Feedback) -> (DVector<f64>, DVector<f64>) {
        (st.q_d.clone(), st.dq_d.clone())
    }
}

/// `q̇_d` from the action; `q_d` integrated at the control rate and kept
/// inside the joint limits.
#[derive(Clone, Debug)]
pub struct JointVelocity {
    model: Arc<RobotModel>,
    lower: DVector<f64>,
}

impl JointVelocity {
    pub fn new(model: Arc<RobotModel>) -> Self {
        Self {
            lower: -model.dq_max(),
            model,
        }
    }
}

pub(crate) fn integrate_joint_target(model: &RobotModel, st: &mut ControllerState) {
    let dt = crate::control_dt();
    let next = &st.q_d + &st.dq_d * dt;
    st.q_d = next.zip_zip_map(model.q_min(), model.q_max(), |q, lo, hi| q.clamp(lo, hi));
}

impl TargetVariable for JointVelocity {
    fn base(&self) -> BaseVariable {
        BaseVariable::JointVelocity
    }

    fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    fn upper(&self) -> &DVector<f64> {
        self.model.dq_max()
    }

    fn derivative_bound(&self) -> DVector<f64> {
        self.model.ddq_max().clone()
    }

    fn feedback(&self, fb: &Feedback) -> DVector<f64> {
        fb.joints.dq.clone()
    }

    fn on_target(&self, st: &mut ControllerState, _fb: &Feedback) {
        st.dq_d = st.v_d.clone();
    }

    fn joint_targets(&self, st: &mut ControllerState, _fb: &Feedback) -> (DVector<f64>, DVector<f64>) {
        integrate_joint_target(&self.model, st);
        (st.q_d.clone(), st.dq_d.clone())
    }
}
