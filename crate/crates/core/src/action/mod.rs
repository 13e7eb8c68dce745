//! The thirteen action spaces.
//!
//! Every space maps a normalised policy action `a ∈ [−1, 1]^m` to joint
//! torques. Apart from joint torque (JT), all spaces drive the same joint
//! impedance law and differ only in how the control target `v_d` is formed:
//!
//! | base | scaled | one-step delta | multi-step delta |
//! |------|--------|----------------|------------------|
//! | joint position | `jp` | `oi-jp` | `mi-jp` |
//! | joint velocity | `jv` | `oi-jv` | `mi-jv` |
//! | Cartesian position | `cp` | `oi-cp` | `mi-cp` |
//! | Cartesian velocity | `cv` | `oi-cv` | `mi-cv` |
//!
//! Spaces implement [`ActionSpace`] and are created by name through a
//! [`SpaceRegistry`]. A [`Controller`] owns one space and turns its joint
//! targets into torques at the control rate.

mod cartesian;
mod controller;
mod impedance;
mod joint;
mod law;
mod registry;
mod torque;

use std::fmt;

use nalgebra::{DVector, Matrix6xX};
use serde::{Deserialize, Serialize};

pub use cartesian::{CartesianPosition, CartesianVelocity, IkConfig};
pub use controller::{Controller, ControllerConfig};
pub use impedance::{ImpedanceSpace, TargetVariable};
pub use joint::{JointPosition, JointVelocity};
pub use law::{delta_update, jic_torque, scale_action, DeltaConfig, Gains};
pub use registry::{SpaceContext, SpaceFactory, SpaceRegistry};
pub use torque::JointTorque;

use crate::error::{Error, Result};
use crate::robot::{jacobian_from_frames, link_frames, JointState, Pose, RobotModel, Twist};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionSpaceKind {
    Jt,
    Jp,
    OiJp,
    MiJp,
    Jv,
    OiJv,
    MiJv,
    Cp,
    OiCp,
    MiCp,
    Cv,
    OiCv,
    MiCv,
}

/// Variable the impedance-based spaces target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaseVariable {
    JointPosition,
    JointVelocity,
    CartesianPosition,
    CartesianVelocity,
}

/// How an action becomes a control target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetMode {
    /// `v_d = s(a)`.
    Scaled,
    /// `v_d = clip(v + c·a·dt)` from live feedback.
    OneStep,
    /// `v_d = clip(v_d + c·a·dt)` from the previous target.
    MultiStep,
}

impl ActionSpaceKind {
    pub const ALL: [ActionSpaceKind; 13] = [
        Self::Jp,
        Self::OiJp,
        Self::MiJp,
        Self::Jv,
        Self::OiJv,
        Self::MiJv,
        Self::Jt,
        Self::Cp,
        Self::OiCp,
        Self::MiCp,
        Self::Cv,
        Self::OiCv,
        Self::MiCv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Jt => "jt",
            Self::Jp => "jp",
            Self::OiJp => "oi-jp",
            Self::MiJp => "mi-jp",
            Self::Jv => "jv",
            Self::OiJv => "oi-jv",
            Self::MiJv => "mi-jv",
            Self::Cp => "cp",
            Self::OiCp => "oi-cp",
            Self::MiCp => "mi-cp",
            Self::Cv => "cv",
            Self::OiCv => "oi-cv",
            Self::MiCv => "mi-cv",
        }
    }

    /// Table label, e.g. `OIΔJP`.
    pub fn label(self) -> String {
        let base = match self.base() {
            None => return "JT".into(),
            Some(BaseVariable::JointPosition) => "JP",
            Some(BaseVariable::JointVelocity) => "JV",
            Some(BaseVariable::CartesianPosition) => "CP",
            Some(BaseVariable::CartesianVelocity) => "CV",
        };
        match self.mode() {
            TargetMode::Scaled => base.into(),
            TargetMode::OneStep => format!("OIΔ{base}"),
            TargetMode::MultiStep => format!("MIΔ{base}"),
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn base(self) -> Option<BaseVariable> {
        use ActionSpaceKind::*;
        Some(match self {
            Jt => return None,
            Jp | OiJp | MiJp => BaseVariable::JointPosition,
            Jv | OiJv | MiJv => BaseVariable::JointVelocity,
            Cp | OiCp | MiCp => BaseVariable::CartesianPosition,
            Cv | OiCv | MiCv => BaseVariable::CartesianVelocity,
        })
    }

    pub fn mode(self) -> TargetMode {
        use ActionSpaceKind::*;
        match self {
            OiJp | OiJv | OiCp | OiCv => TargetMode::OneStep,
            MiJp | MiJv | MiCp | MiCv => TargetMode::MultiStep,
            _ => TargetMode::Scaled,
        }
    }

    pub fn is_cartesian(self) -> bool {
        matches!(self.base(), Some(BaseVariable::CartesianPosition | BaseVariable::CartesianVelocity))
    }

    pub fn is_joint(self) -> bool {
        !self.is_cartesian()
    }

    /// Position-type target (JP or CP families).
    pub fn is_position(self) -> bool {
        matches!(self.base(), Some(BaseVariable::JointPosition | BaseVariable::CartesianPosition))
    }

    pub fn is_velocity(self) -> bool {
        matches!(self.base(), Some(BaseVariable::JointVelocity | BaseVariable::CartesianVelocity))
    }

    /// Action dimension for an arm with `n_joints` joints.
    pub fn action_dim(self, n_joints: usize) -> usize {
        match self.base() {
            None | Some(BaseVariable::JointPosition | BaseVariable::JointVelocity) => n_joints,
            Some(BaseVariable::CartesianVelocity) => 6,
            Some(BaseVariable::CartesianPosition) => 9,
        }
    }
}

impl fmt::Display for ActionSpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Robot feedback available to a space at one control step.
#[derive(Clone, Debug)]
pub struct Feedback {
    pub joints: JointState,
    pub pose: Pose,
    pub twist: Twist,
    pub jacobian: Matrix6xX<f64>,
}

impl Feedback {
    pub fn new(model: &RobotModel, joints: JointState) -> Result<Self> {
        let frames = link_frames(model, &joints.q)?;
        let jacobian = jacobian_from_frames(&frames, &frames.ee.translation.vector);
        let tv = &jacobian * &joints.dq;
        let twist = Twist {
            linear: nalgebra::Vector3::new(tv[0], tv[1], tv[2]),
            angular: nalgebra::Vector3::new(tv[3], tv[4], tv[5]),
        };
        Ok(Self {
            pose: Pose::from_isometry(&frames.ee),
            twist,
            jacobian,
            joints,
        })
    }
}

/// Per-episode memory of an action space.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerState {
    /// Current control target in units of the space's variable.
    pub v_d: DVector<f64>,
    /// Joint position target handed to the impedance law.
    pub q_d: DVector<f64>,
    /// Joint velocity target handed to the impedance law.
    pub dq_d: DVector<f64>,
    /// Joint position target of the previous policy step.
    pub q_d_prev: DVector<f64>,
    /// Cartesian pose target (Cartesian position spaces).
    pub x_d: Option<Pose>,
}

impl ControllerState {
    pub fn at_feedback(v: DVector<f64>, fb: &Feedback) -> Self {
        let q = fb.joints.q.clone();
        Self {
            v_d: v,
            dq_d: DVector::zeros(q.len()),
            q_d: q.clone(),
            q_d_prev: q,
            x_d: Some(fb.pose.clone()),
        }
    }
}

/// What a space asks the controller to do at one control step.
#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Torque(DVector<f64>),
    JointTargets { q_d: DVector<f64>, dq_d: DVector<f64> },
}

/// A policy-action → torque interface.
///
/// `apply_action` runs once per policy step and updates the control target;
/// `command` runs at every control step and may advance internal
/// integrators.
pub trait ActionSpace: Send + Sync {
    fn kind(&self) -> ActionSpaceKind;
    fn action_dim(&self) -> usize;
    /// Limits of the control target `v_d`.
    fn limits(&self) -> (&DVector<f64>, &DVector<f64>);
    /// The feedback `v` matching `v_d` (same units and limits).
    fn feedback_value(&self, fb: &Feedback) -> DVector<f64>;
    fn state(&self) -> &ControllerState;
    /// Rate `c` of a delta space; `None` for the others.
    fn delta_rate(&self) -> Option<&DVector<f64>> {
        None
    }
    /// Initialises all targets from the current feedback.
    fn reset(&mut self, fb: &Feedback);
    fn apply_action(&mut self, a: &DVector<f64>, fb: &Feedback) -> Result<()>;
    fn command(&mut self, fb: &Feedback) -> Command;
    fn box_clone(&self) -> Box<dyn ActionSpace>;
}

impl Clone for Box<dyn ActionSpace> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

pub(crate) fn check_action(a: &DVector<f64>, dim: usize) -> Result<()> {
    crate::error::check_len("action", dim, a.len())?;
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("action"));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
