//! Serial-arm description, kinematics and orientation helpers.

pub(crate) mod kinematics;
pub mod orientation;

pub use kinematics::{
    forward_kinematics, ik_velocity, jacobian, jacobian_from_frames, link_frames, solve_position_ik, LinkFrames,
};
pub(crate) use kinematics::ik_velocity_with_jacobian;

use nalgebra::{DVector, Isometry3, Matrix3, Translation3, Unit, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// One revolute joint and the link it carries, in URDF style: a fixed
/// transform from the parent frame (`origin_xyz`, `origin_rpy` with the
/// URDF fixed-axis roll/pitch/yaw convention) followed by a rotation about
/// `axis`. Mass properties are expressed in the joint frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    #[serde(default)]
    pub name: String,
    pub origin_xyz: [f64; 3],
    #[serde(default)]
    pub origin_rpy: [f64; 3],
    pub axis: [f64; 3],
    pub q_min: f64,
    pub q_max: f64,
    pub dq_max: f64,
    pub ddq_max: f64,
    pub dddq_max: f64,
    pub tau_max: f64,
    pub q_def: f64,
    pub mass: f64,
    pub com: [f64; 3],
    pub inertia: [[f64; 3]; 3],
    /// Reflected rotor inertia added to the joint-space mass matrix diagonal.
    #[serde(default)]
    pub armature: f64,
    /// Viscous joint friction (N·m·s/rad).
    #[serde(default)]
    pub damping: f64,
}

/// End-effector limits used by the Cartesian action spaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartesianLimits {
    pub pos_min: [f64; 3],
    pub pos_max: [f64; 3],
    pub lin_vel: f64,
    pub ang_vel: f64,
    pub lin_acc: f64,
    pub ang_acc: f64,
}

/// On-disk robot description (JSON).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotDescription {
    pub name: String,
    pub joints: Vec<JointSpec>,
    #[serde(default)]
    pub tool_xyz: [f64; 3],
    #[serde(default)]
    pub tool_rpy: [f64; 3],
    #[serde(default = "default_gravity")]
    pub gravity: [f64; 3],
    /// Radius of the spherical end-effector tip used for contact (m).
    #[serde(default = "default_tip_radius")]
    pub tip_radius: f64,
    pub cartesian: CartesianLimits,
}

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -9.81]
}

fn default_tip_radius() -> f64 {
    0.015
}

/// Kinematic and dynamic model of an n-DOF serial arm.
///
/// Built from a [`RobotDescription`]; caches the transforms and limit
/// vectors that the hot paths need.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RobotDescription", into = "RobotDescription")]
pub struct RobotModel {
    desc: RobotDescription,
    pub(crate) origins: Vec<Isometry3<f64>>,
    pub(crate) axes: Vec<Unit<Vector3<f64>>>,
    pub(crate) tool: Isometry3<f64>,
    pub(crate) masses: Vec<f64>,
    pub(crate) coms: Vec<Vector3<f64>>,
    pub(crate) inertias: Vec<Matrix3<f64>>,
    q_min: DVector<f64>,
    q_max: DVector<f64>,
    dq_max: DVector<f64>,
    ddq_max: DVector<f64>,
    dddq_max: DVector<f64>,
    tau_max: DVector<f64>,
    q_def: DVector<f64>,
    armature: DVector<f64>,
    damping: DVector<f64>,
    gravity: Vector3<f64>,
}

impl TryFrom<RobotDescription> for RobotModel {
    type Error = Error;

    fn try_from(desc: RobotDescription) -> Result<Self> {
        RobotModel::new(desc)
    }
}

impl From<RobotModel> for RobotDescription {
    fn from(m: RobotModel) -> Self {
        m.desc
    }
}

fn isometry(xyz: [f64; 3], rpy: [f64; 3]) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(xyz[0], xyz[1], xyz[2]),
        UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
    )
}

impl RobotModel {
    /// Builds a model and checks every invariant of the description.
    pub fn new(desc: RobotDescription) -> Result<Self> {
        let model = Self::new_unvalidated(desc)?;
        model.validate()?;
        Ok(model)
    }

    /// Builds a model with only structural checks (non-empty chain, non-zero
    /// axes). Used for analytic test rigs such as single-link pendulums.
    pub fn new_unvalidated(desc: RobotDescription) -> Result<Self> {
        if desc.joints.is_empty() {
            return Err(Error::InvalidModel("chain has no joints".into()));
        }
        let mut axes = Vec::with_capacity(desc.joints.len());
        for j in &desc.joints {
            let a = Vector3::from(j.axis);
            if !(a.norm() > 1e-12) {
                return Err(Error::InvalidModel(format!("joint `{}` has a zero axis", j.name)));
            }
            axes.push(Unit::new_normalize(a));
        }
        let col = |f: fn(&JointSpec) -> f64| DVector::from_iterator(desc.joints.len(), desc.joints.iter().map(f));
        Ok(Self {
            origins: desc.joints.iter().map(|j| isometry(j.origin_xyz, j.origin_rpy)).collect(),
            axes,
            tool: isometry(desc.tool_xyz, desc.tool_rpy),
            masses: desc.joints.iter().map(|j| j.mass).collect(),
            coms: desc.joints.iter().map(|j| Vector3::from(j.com)).collect(),
            inertias: desc
                .joints
                .iter()
                .map(|j| Matrix3::from_fn(|r, c| j.inertia[r][c]))
                .collect(),
            q_min: col(|j| j.q_min),
            q_max: col(|j| j.q_max),
            dq_max: col(|j| j.dq_max),
            ddq_max: col(|j| j.ddq_max),
            dddq_max: col(|j| j.dddq_max),
            tau_max: col(|j| j.tau_max),
            q_def: col(|j| j.q_def),
            armature: col(|j| j.armature),
            damping: col(|j| j.damping),
            gravity: Vector3::from(desc.gravity),
            desc,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        if self.n_joints() < 2 {
            return bad(format!("need at least 2 joints, got {}", self.n_joints()));
        }
        for j in &self.desc.joints {
            let name = &j.name;
            if !(j.q_min < j.q_max) {
                return bad(format!("joint `{name}`: q_min must be below q_max"));
            }
            if !(j.q_def >= j.q_min && j.q_def <= j.q_max) {
                return bad(format!("joint `{name}`: q_def outside limits"));
            }
            for (what, v) in [
                ("dq_max", j.dq_max),
                ("ddq_max", j.ddq_max),
                ("dddq_max", j.dddq_max),
                ("tau_max", j.tau_max),
            ] {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("joint `{name}`: {what} must be positive"));
                }
            }
            if !(j.mass > 0.0) || j.armature < 0.0 || j.damping < 0.0 {
                return bad(format!("joint `{name}`: mass must be positive, armature and damping non-negative"));
            }
            let inertia = Matrix3::from_fn(|r, c| j.inertia[r][c]);
            if (inertia - inertia.transpose()).amax() > 1e-12 {
                return bad(format!("joint `{name}`: inertia not symmetric"));
            }
            if inertia.cholesky().is_none() {
                return bad(format!("joint `{name}`: inertia not positive definite"));
            }
        }
        let c = &self.desc.cartesian;
        if (0..3).any(|i| !(c.pos_min[i] < c.pos_max[i])) {
            return bad("cartesian pos_min must be below pos_max".into());
        }
        if [c.lin_vel, c.ang_vel, c.lin_acc, c.ang_acc].iter().any(|v| !(*v > 0.0)) {
            return bad("cartesian limits must be positive".into());
        }
        Ok(())
    }

    /// Parses and validates a JSON robot description.
    pub fn from_json(text: &str) -> Result<Self> {
        let desc: RobotDescription = serde_json::from_str(text)?;
        Self::new(desc)
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Loads one of the shipped descriptions by name (`planar3`, `panda7`).
    pub fn builtin(name: &str) -> Option<Self> {
        let text = match name {
            "planar3" => include_str!("../../robots/planar3.json"),
            "panda7" => include_str!("../../robots/panda7.json"),
            _ => return None,
        };
        Some(Self::from_json(text).expect("shipped robot descriptions are valid"))
    }

    /// Resolves a builtin name or a path to a JSON file.
    pub fn load(name_or_path: &str) -> Result<Self> {
        match Self::builtin(name_or_path) {
            Some(m) => Ok(m),
            None => Self::from_file(name_or_path),
        }
    }

    pub fn description(&self) -> &RobotDescription {
        &self.desc
    }

    pub fn name(&self) -> &str {
        &self.desc.name
    }

    pub fn n_joints(&self) -> usize {
        self.desc.joints.len()
    }

    pub fn q_min(&self) -> &DVector<f64> {
        &self.q_min
    }
    pub fn q_max(&self) -> &DVector<f64> {
        &self.q_max
    }
    pub fn dq_max(&self) -> &DVector<f64> {
        &self.dq_max
    }
    pub fn ddq_max(&self) -> &DVector<f64> {
        &self.ddq_max
    }
    pub fn dddq_max(&self) -> &DVector<f64> {
        &self.dddq_max
    }
    pub fn tau_max(&self) -> &DVector<f64> {
        &self.tau_max
    }
    pub fn q_def(&self) -> &DVector<f64> {
        &self.q_def
    }
    pub fn armature(&self) -> &DVector<f64> {
        &self.armature
    }
    pub fn joint_damping(&self) -> &DVector<f64> {
        &self.damping
    }
    pub fn gravity(&self) -> Vector3<f64> {
        self.gravity
    }
    pub fn cartesian(&self) -> &CartesianLimits {
        &self.desc.cartesian
    }
    pub fn tip_radius(&self) -> f64 {
        self.desc.tip_radius
    }
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Returns a copy with link masses and inertias scaled by `mass_scale` and
    /// viscous joint friction scaled by `friction_scale`.
    pub fn perturbed(&self, mass_scale: f64, friction_scale: f64) -> Result<Self> {
        let mut desc = self.desc.clone();
        for j in &mut desc.joints {
            j.mass *= mass_scale;
            for row in &mut j.inertia {
                for v in row.iter_mut() {
                    *v *= mass_scale;
                }
            }
            j.damping *= friction_scale;
        }
        Self::new_unvalidated(desc)
    }

    pub(crate) fn check_q(&self, q: &DVector<f64>) -> Result<()> {
        check_len("joint vector", self.n_joints(), q.len())
    }
}

/// Joint positions and velocities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub q: DVector<f64>,
    pub dq: DVector<f64>,
}

impl JointState {
    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self { q, dq: DVector::zeros(n) }
    }
}

/// End-effector pose; orientation kept as a rotation matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: nalgebra::Rotation3<f64>,
}

impl Pose {
    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self {
            position: iso.translation.vector,
            orientation: iso.rotation.to_rotation_matrix(),
        }
    }
}

/// Spatial velocity of the end effector (world frame).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Twist {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}

impl Twist {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.linear.x,
            self.linear.y,
            self.linear.z,
            self.angular.x,
            self.angular.y,
            self.angular.z,
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            linear: Vector3::new(v[0], v[1], v[2]),
            angular: Vector3::new(v[3], v[4], v[5]),
        }
    }
}
