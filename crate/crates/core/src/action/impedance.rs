use std::sync::Arc;

use nalgebra::DVector;

use super::law::{delta_update, scale_action, DeltaConfig};
use super::{check_action, ActionSpace, ActionSpaceKind, BaseVariable, Command, ControllerState, Feedback, TargetMode};
use crate::error::Result;
use crate::robot::RobotModel;

/// The variable an impedance-based space targets: its limits, how feedback
/// is read, and how a target turns into joint-space references.
pub trait TargetVariable: Clone + Send + Sync + 'static {
    fn base(&self) -> BaseVariable;
    fn lower(&self) -> &DVector<f64>;
    fn upper(&self) -> &DVector<f64>;
    /// Bound on the time derivative of the variable; the default delta rate.
    fn derivative_bound(&self) -> DVector<f64>;
    fn feedback(&self, fb: &Feedback) -> DVector<f64>;
    /// Called once per policy step after `v_d` changed.
    fn on_target(&self, st: &mut ControllerState, fb: &Feedback);
    /// Joint references for one control step.
    fn joint_targets(&self, st: &mut ControllerState, fb: &Feedback) -> (DVector<f64>, DVector<f64>);
}

/// An impedance-controlled space: a target variable plus a target mode.
#[derive(Clone)]
pub struct ImpedanceSpace<V: TargetVariable> {
    kind: ActionSpaceKind,
    variable: V,
    delta: DeltaConfig,
    state: ControllerState,
}

impl<V: TargetVariable> ImpedanceSpace<V> {
    /// `c` overrides the delta rate; the default is the variable's
    /// derivative bound.
    pub fn new(kind: ActionSpaceKind, variable: V, model: &Arc<RobotModel>, c: Option<DVector<f64>>) -> Self {
        debug_assert_eq!(kind.base(), Some(variable.base()));
        let c = c.unwrap_or_else(|| variable.derivative_bound());
        let dim = variable.lower().len();
        let n = model.n_joints();
        Self {
            kind,
            delta: DeltaConfig { c, dt: crate::policy_dt() },
            state: ControllerState {
                v_d: DVector::zeros(dim),
                q_d: DVector::zeros(n),
                dq_d: DVector::zeros(n),
                q_d_prev: DVector::zeros(n),
                x_d: None,
            },
            variable,
        }
    }

    pub fn delta_config(&self) -> &DeltaConfig {
        &self.delta
    }

    pub fn variable(&self) -> &V {
        &self.variable
    }
}

impl<V: TargetVariable> ActionSpace for ImpedanceSpace<V> {
    fn kind(&self) -> ActionSpaceKind {
        self.kind
    }

    fn action_dim(&self) -> usize {
        self.variable.lower().len()
    }

    fn limits(&self) -> (&DVector<f64>, &DVector<f64>) {
        (self.variable.lower(), self.variable.upper())
    }

    fn feedback_value(&self, fb: &Feedback) -> DVector<f64> {
        self.variable.feedback(fb)
    }

    fn state(&self) -> &ControllerState {
        &self.state
    }

    fn delta_rate(&self) -> Option<&DVector<f64>> {
        (self.kind.mode() != TargetMode::Scaled).then_some(&self.delta.c)
    }

    fn reset(&mut self, fb: &Feedback) {
        let v = self.variable.feedback(fb);
        let (lo, hi) = (self.variable.lower(), self.variable.upper());
        let v = v.zip_zip_map(lo, hi, |x, l, h| x.clamp(l, h));
        self.state = ControllerState::at_feedback(v, fb);
    }

    fn apply_action(&mut self, a: &DVector<f64>, fb: &Feedback) -> Result<()> {
        check_action(a, self.action_dim())?;
        let (lo, hi) = (self.variable.lower(), self.variable.upper());
        self.state.v_d = match self.kind.mode() {
            TargetMode::Scaled => scale_action(a, lo, hi),
            TargetMode::OneStep => delta_update(&self.variable.feedback(fb), a, &self.delta, lo, hi),
            TargetMode::MultiStep => delta_update(&self.state.v_d, a, &self.delta, lo, hi),
        };
        self.variable.on_target(&mut self.state, fb);
        Ok(())
    }

    fn command(&mut self, fb: &Feedback) -> Command {
        let (q_d, dq_d) = self.variable.joint_targets(&mut self.state, fb);
        Command::JointTargets { q_d, dq_d }
    }

    fn box_clone(&self) -> Box<dyn ActionSpace> {
        Box::new(self.clone())
    }
}
