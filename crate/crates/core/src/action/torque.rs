use std::sync::Arc;

use nalgebra::DVector;

use super::law::scale_action;
use super::{check_action, ActionSpace, ActionSpaceKind, Command, ControllerState, Feedback};
use crate::error::Result;
use crate::robot::RobotModel;

/// Direct torque control: `τ = s(a)` over `±tau_max`, no gravity term.
#[derive(Clone, Debug)]
pub struct JointTorque {
    lower: DVector<f64>,
    upper: DVector<f64>,
    state: ControllerState,
}

impl JointTorque {
    pub fn new(model: &Arc<RobotModel>) -> Self {
        let n = model.n_joints();
        let upper = model.tau_max().clone();
        Self {
            lower: -&upper,
            upper,
            state: ControllerState {
                v_d: DVector::zeros(n),
                q_d: DVector::zeros(n),
                dq_d: DVector::zeros(n),
                q_d_prev: DVector::zeros(n),
                x_d: None,
            },
        }
    }
}

impl ActionSpace for JointTorque {
    fn kind(&self) -> ActionSpaceKind {
        ActionSpaceKind::Jt
    }

    fn action_dim(&self) -> usize {
        self.upper.len()
    }

    fn limits(&self) -> (&DVector<f64>, &DVector<f64>) {
        (&self.lower, &self.upper)
    }

    /// The commanded torque; there is no torque sensor in the model.
    fn feedback_value(&self, _fb: &Feedback) -> DVector<f64> {
        self.state.v_d.clone()
    }

    fn state(&self) -> &ControllerState {
        &self.state
    }

    fn reset(&mut self, fb: &Feedback) {
        let n = self.upper.len();
        self.state = ControllerState::at_feedback(DVector::zeros(n), fb);
        self.state.x_d = None;
    }

    fn apply_action(&mut self, a: &DVector<f64>, fb: &Feedback) -> Result<()> {
        check_action(a, self.action_dim())?;
        self.state.v_d = scale_action(a, &self.lower, &self.upper);
        self.state.q_d = fb.joints.q.clone();
        self.state.dq_d = fb.joints.dq.clone();
        Ok(())
    }

    fn command(&mut self, _fb: &Feedback) -> Command {
        Command::Torque(self.state.v_d.clone())
    }

    fn box_clone(&self) -> Box<dyn ActionSpace> {
        Box::new(self.clone())
    }
}
