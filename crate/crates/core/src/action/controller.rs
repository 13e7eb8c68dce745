use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::cartesian::IkConfig;
use super::law::{jic_torque, Gains};
use super::registry::{SpaceContext, SpaceRegistry};
use super::{ActionSpace, ActionSpaceKind, Command, Feedback};
use crate::dynamics::gravity_torque;
use crate::error::{Error, Result};
use crate::robot::RobotModel;
use crate::safety::{low_pass, rate_limit, ConstraintSet, FilterState};

/// Controller settings as they appear in run configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Joint stiffness K (N·m/rad), applied to every joint.
    pub stiffness: f64,
    /// Joint damping D (N·m·s/rad); `None` means `2·√K`.
    pub damping: Option<f64>,
    #[serde(flatten)]
    pub ik: IkConfig,
    /// Multiplier on the default delta rate.
    pub delta_scale: f64,
    /// Explicit per-dimension delta rate.
    pub delta_c: Option<Vec<f64>>,
    /// Route joint targets through the low-pass filter and rate limiter.
    pub deployment: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            stiffness: 300.0,
            damping: None,
            ik: IkConfig::default(),
            delta_scale: 1.0,
            delta_c: None,
            deployment: false,
        }
    }
}

impl ControllerConfig {
    pub fn gains(&self, n: usize) -> Result<Gains> {
        let k = self.stiffness;
        let d = self.damping.unwrap_or(2.0 * k.sqrt());
        if !(k.is_finite() && k > 0.0 && d.is_finite() && d > 0.0) {
            return Err(Error::InvalidConfig(format!("gains must be positive (K={k}, D={d})")));
        }
        Ok(Gains::isotropic(n, k, d))
    }

    pub fn space_context(&self, model: Arc<RobotModel>) -> SpaceContext {
        SpaceContext {
            model,
            ik: self.ik,
            delta_c: self.delta_c.as_ref().map(|c| DVector::from_column_slice(c)),
            delta_scale: self.delta_scale,
        }
    }
}

/// Runs one action space at the control rate and produces torques.
///
/// The model passed here is the controller's own (nominal) model used for
/// gravity compensation; it may differ from the simulated plant.
#[derive(Clone)]
pub struct Controller {
    space: Box<dyn ActionSpace>,
    model: Arc<RobotModel>,
    gains: Gains,
    deployment: bool,
    filter: FilterState,
    constraints: ConstraintSet,
    last_q_d: DVector<f64>,
    last_dq_d: DVector<f64>,
}

impl Controller {
    pub fn new(space: Box<dyn ActionSpace>, model: Arc<RobotModel>, gains: Gains, deployment: bool) -> Self {
        let n = model.n_joints();
        let zeros = DVector::zeros(n);
        Self {
            space,
            gains,
            deployment,
            filter: FilterState::new(&zeros),
            constraints: ConstraintSet::from_model(&model, crate::control_dt()),
            last_q_d: zeros.clone(),
            last_dq_d: zeros,
            model,
        }
    }

    pub fn from_config(
        registry: &SpaceRegistry,
        name: &str,
        model: Arc<RobotModel>,
        cfg: &ControllerConfig,
    ) -> Result<Self> {
        let space = registry.create(name, &cfg.space_context(model.clone()))?;
        let gains = cfg.gains(model.n_joints())?;
        Ok(Self::new(space, model, gains, cfg.deployment))
    }

    pub fn kind(&self) -> ActionSpaceKind {
        self.space.kind()
    }

    pub fn space(&self) -> &dyn ActionSpace {
        self.space.as_ref()
    }

    pub fn model(&self) -> &Arc<RobotModel> {
        &self.model
    }

    pub fn gains(&self) -> &Gains {
        &self.gains
    }

    pub fn deployment(&self) -> bool {
        self.deployment
    }

    pub fn set_deployment(&mut self, on: bool) {
        self.deployment = on;
    }

    /// Joint references of the last control step, after filtering.
    pub fn last_joint_targets(&self) -> (&DVector<f64>, &DVector<f64>) {
        (&self.last_q_d, &self.last_dq_d)
    }

    pub fn reset(&mut self, fb: &Feedback) {
        self.space.reset(fb);
        self.filter.reset(&fb.joints.q);
        self.last_q_d = fb.joints.q.clone();
        self.last_dq_d = DVector::zeros(self.model.n_joints());
    }

    /// Policy-rate update of the control target.
    pub fn apply_action(&mut self, a: &DVector<f64>, fb: &Feedback) -> Result<()> {
        self.space.apply_action(a, fb)
    }

    /// Control-rate torque for the current feedback, clipped to `±tau_max`.
    pub fn torque(&mut self, fb: &Feedback) -> Result<DVector<f64>> {
        let tau = match self.space.command(fb) {
            Command::Torque(t) => {
                self.last_q_d = fb.joints.q.clone();
                self.last_dq_d = fb.joints.dq.clone();
                t
            }
            Command::JointTargets { q_d, dq_d } => {
                let (q_d, dq_d) = if self.deployment {
                    self.filter_targets(&q_d)
                } else {
                    (q_d, dq_d)
                };
                let tau = jic_torque(&self.gains, &q_d, &dq_d, &fb.joints.q, &fb.joints.dq)
                    + gravity_torque(&self.model, &fb.joints.q)?;
                self.last_q_d = q_d;
                self.last_dq_d = dq_d;
                tau
            }
        };
        if tau.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("torque"));
        }
        let lim = self.model.tau_max();
        Ok(tau.zip_map(lim, |t, l| t.clamp(-l, l)))
    }

    fn filter_targets(&mut self, q_d: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let dt = self.constraints.dt;
        let prev = self.filter.last_output().clone();
        let smooth = low_pass(&mut self.filter, q_d, dt);
        let out = rate_limit(&mut self.filter, &smooth, &self.constraints, self.model.q_min(), self.model.q_max());
        let dq = (&out - prev) / dt;
        (out, dq)
    }
}
