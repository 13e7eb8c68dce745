//! Rigid-body dynamics of the arm and the planar box contact.
//!
//! Inverse dynamics is recursive Newton–Euler in world coordinates; the mass
//! matrix is assembled independently from per-link Jacobians so that the two
//! can check each other.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::robot::{jacobian_from_frames as jacobian_at, link_frames, JointState, Pose, RobotModel};

/// Recursive Newton–Euler torques for the commanded motion, including
/// armature inertia but not joint friction.
pub fn inverse_dynamics(
    model: &RobotModel,
    q: &DVector<f64>,
    dq: &DVector<f64>,
    ddq: &DVector<f64>,
    gravity: &Vector3<f64>,
) -> Result<DVector<f64>> {
    let n = model.n_joints();
    check_len("dq", n, dq.len())?;
    check_len("ddq", n, ddq.len())?;
    let frames = link_frames(model, q)?;

    let mut omega = vec![Vector3::zeros(); n];
    let mut alpha = vec![Vector3::zeros(); n];
    let mut acc_com = vec![Vector3::zeros(); n];

    // base: a fictitious upward acceleration accounts for gravity
    let mut w_prev = Vector3::zeros();
    let mut dw_prev = Vector3::zeros();
    let mut a_prev = -gravity;
    let mut p_prev = Vector3::zeros();
    for i in 0..n {
        let z = frames.joint_axis[i];
        let p = frames.joint_pos[i];
        let r = p - p_prev;
        // origin of frame i moves rigidly with link i-1
        let a_origin = a_prev + dw_prev.cross(&r) + w_prev.cross(&w_prev.cross(&r));
        let w = w_prev + z * dq[i];
        let dw = dw_prev + z * ddq[i] + w_prev.cross(&(z * dq[i]));
        let rc = frames.com[i] - p;
        acc_com[i] = a_origin + dw.cross(&rc) + w.cross(&w.cross(&rc));
        omega[i] = w;
        alpha[i] = dw;
        w_prev = w;
        dw_prev = dw;
        a_prev = a_origin;
        p_prev = p;
    }

    let mut tau = DVector::zeros(n);
    let mut f_next = Vector3::zeros();
    let mut n_next = Vector3::zeros();
    for i in (0..n).rev() {
        let rot = frames.link_rot[i].matrix();
        let inertia_w: Matrix3<f64> = rot * model.inertias[i] * rot.transpose();
        let m = model.masses[i];
        let p = frames.joint_pos[i];
        let f = acc_com[i] * m + f_next;
        let lever_next = if i + 1 < n { frames.joint_pos[i + 1] - p } else { Vector3::zeros() };
        let moment = inertia_w * alpha[i]
            + omega[i].cross(&(inertia_w * omega[i]))
            + (frames.com[i] - p).cross(&(acc_com[i] * m))
            + n_next
            + lever_next.cross(&f_next);
        tau[i] = moment.dot(&frames.joint_axis[i]) + model.armature()[i] * ddq[i];
        f_next = f;
        n_next = moment;
    }
    Ok(tau)
}

/// Joint-space inertia `Σ mᵢ·Jvᵢᵀ·Jvᵢ + Jωᵢᵀ·Iᵢ·Jωᵢ` plus armature.
pub fn mass_matrix(model: &RobotModel, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = model.n_joints();
    let frames = link_frames(model, q)?;
    let mut mass = DMatrix::from_diagonal(model.armature());
    for k in 0..n {
        let rot = frames.link_rot[k].matrix();
        let inertia_w = rot * model.inertias[k] * rot.transpose();
        // only joints 0..=k move link k
        let mut jv = DMatrix::zeros(3, k + 1);
        let mut jw = DMatrix::zeros(3, k + 1);
        for i in 0..=k {
            let z = frames.joint_axis[i];
            jv.set_column(i, &z.cross(&(frames.com[k] - frames.joint_pos[i])));
            jw.set_column(i, &z);
        }
        let block = jv.transpose() * &jv * model.masses[k] + jw.transpose() * inertia_w * &jw;
        let mut view = mass.view_mut((0, 0), (k + 1, k + 1));
        view += block;
    }
    Ok(mass)
}

/// Gravity torques `g(q)`; controllers add these as compensation.
pub fn gravity_torque(model: &RobotModel, q: &DVector<f64>) -> Result<DVector<f64>> {
    let n = model.n_joints();
    inverse_dynamics(model, q, &DVector::zeros(n), &DVector::zeros(n), &model.gravity())
}

/// Coriolis, centrifugal and gravity torques.
pub fn bias_torque(model: &RobotModel, q: &DVector<f64>, dq: &DVector<f64>) -> Result<DVector<f64>> {
    inverse_dynamics(model, q, dq, &DVector::zeros(model.n_joints()), &model.gravity())
}

/// Solves `M(q)·ddq = τ − bias(q, dq)`.
pub fn forward_dynamics(
    model: &RobotModel,
    q: &DVector<f64>,
    dq: &DVector<f64>,
    tau: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_len("tau", model.n_joints(), tau.len())?;
    let mass = mass_matrix(model, q)?;
    let rhs = tau - bias_torque(model, q, dq)?;
    let chol = mass
        .cholesky()
        .ok_or_else(|| Error::InvalidModel("mass matrix is not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

pub fn potential_energy(model: &RobotModel, q: &DVector<f64>) -> Result<f64> {
    let frames = link_frames(model, q)?;
    let g = model.gravity();
    Ok(frames.com.iter().zip(model.masses()).map(|(c, m)| -m * g.dot(c)).sum())
}

pub fn kinetic_energy(model: &RobotModel, q: &DVector<f64>, dq: &DVector<f64>) -> Result<f64> {
    let mass = mass_matrix(model, q)?;
    Ok(0.5 * dq.dot(&(mass * dq)))
}

/// Force and moment applied at the end-effector point (world frame).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub moment: Vector3<f64>,
}

impl Wrench {
    pub fn is_zero(&self) -> bool {
        self.force == Vector3::zeros() && self.moment == Vector3::zeros()
    }
}

/// Planar pose of the box on the table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoxPose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoxVel {
    pub vx: f64,
    pub vy: f64,
    pub wz: f64,
}

impl BoxVel {
    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxParams {
    pub mass: f64,
    /// Box–table Coulomb coefficient.
    pub friction_coeff: f64,
    pub half_extents: [f64; 3],
}

impl Default for BoxParams {
    fn default() -> Self {
        Self {
            mass: 0.5,
            friction_coeff: 0.3,
            half_extents: [0.04, 0.04, 0.04],
        }
    }
}

/// Penalty contact between the spherical tip and the box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    pub stiffness: f64,
    pub damping: f64,
    /// Tip–box Coulomb coefficient.
    pub tip_friction: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            stiffness: 5000.0,
            damping: 50.0,
            tip_friction: 0.5,
        }
    }
}

/// Complete simulator state; a plain value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub joints: JointState,
    pub box_pose: BoxPose,
    pub box_vel: BoxVel,
    pub time: f64,
    pub step_index: u64,
}

impl WorldState {
    pub fn new(joints: JointState) -> Self {
        Self {
            joints,
            box_pose: BoxPose::default(),
            box_vel: BoxVel::default(),
            time: 0.0,
            step_index: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub dt: f64,
    #[serde(default)]
    pub contact: ContactParams,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            dt: crate::control_dt(),
            contact: ContactParams::default(),
        }
    }
}

/// Arm (and optional box) simulator stepping at a fixed rate.
#[derive(Clone, Debug)]
pub struct World {
    pub model: Arc<RobotModel>,
    pub config: WorldConfig,
}

impl World {
    pub fn new(model: Arc<RobotModel>, config: WorldConfig) -> Self {
        Self { model, config }
    }

    /// End-effector pose and linear velocity for a joint state.
    pub fn ee_state(&self, joints: &JointState) -> Result<(Pose, Vector6<f64>)> {
        let frames = link_frames(&self.model, &joints.q)?;
        let p = frames.ee.translation.vector;
        let twist = jacobian_at(&frames, &p) * &joints.dq;
        Ok((Pose::from_isometry(&frames.ee), Vector6::from_column_slice(twist.as_slice())))
    }

    /// One semi-implicit Euler step of the arm: torques are clipped to
    /// ±`tau_max`, viscous joint friction and the external end-effector
    /// wrench are added, and joints stop at their hard limits.
    pub fn forward_step(&self, state: &WorldState, tau: &DVector<f64>, external: Option<&Wrench>) -> Result<WorldState> {
        let model = &*self.model;
        check_len("tau", model.n_joints(), tau.len())?;
        if tau.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("torque"));
        }
        let q = &state.joints.q;
        let dq = &state.joints.dq;
        let lim = model.tau_max();
        let mut tau_total = tau.zip_map(lim, |t, l| t.clamp(-l, l)) - model.joint_damping().component_mul(dq);
        if let Some(w) = external.filter(|w| !w.is_zero()) {
            let frames = link_frames(model, q)?;
            let jac = jacobian_at(&frames, &frames.ee.translation.vector);
            let wv = Vector6::new(w.force.x, w.force.y, w.force.z, w.moment.x, w.moment.y, w.moment.z);
            tau_total += jac.transpose() * wv;
        }
        let ddq = forward_dynamics(model, q, dq, &tau_total)?;
        let dt = self.config.dt;
        let mut dq_new = dq + ddq * dt;
        let mut q_new = q + &dq_new * dt;
        for i in 0..model.n_joints() {
            let (lo, hi) = (model.q_min()[i], model.q_max()[i]);
            if q_new[i] >= hi {
                q_new[i] = hi;
                dq_new[i] = dq_new[i].min(0.0);
            } else if q_new[i] <= lo {
                q_new[i] = lo;
                dq_new[i] = dq_new[i].max(0.0);
            }
        }
        let step_index = state.step_index + 1;
        Ok(WorldState {
            joints: JointState { q: q_new, dq: dq_new },
            box_pose: state.box_pose,
            box_vel: state.box_vel,
            time: step_index as f64 * dt,
            step_index,
        })
    }

    /// Advances the box by one step under tip contact and table friction.
    /// Returns the new state (arm untouched) and the wrench the box exerts on
    /// the end effector.
    pub fn contact_step(
        &self,
        state: &WorldState,
        box_params: &BoxParams,
        ee: &Pose,
        ee_vel: &Vector3<f64>,
    ) -> (WorldState, Wrench) {
        let dt = self.config.dt;
        let cp = &self.config.contact;
        let g = self.model.gravity().norm();
        let h = box_params.half_extents;
        let pose = state.box_pose;
        let vel = state.box_vel;
        let (s, c) = pose.yaw.sin_cos();
        let center = Vector3::new(pose.x, pose.y, h[2]);

        // tip in box coordinates
        let d = ee.position - center;
        let local = Vector3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z);
        let clamped = Vector3::new(local.x.clamp(-h[0], h[0]), local.y.clamp(-h[1], h[1]), local.z.clamp(-h[2], h[2]));
        let offset = local - clamped;
        let dist = offset.norm();
        let radius = self.model.tip_radius();

        let mut tip_force = Vector3::zeros();
        let mut contact_local = clamped;
        let (penetration, normal_local) = if dist > 1e-12 {
            (radius - dist, offset / dist)
        } else {
            // centre inside the box: push out through the nearest face
            let gaps = [h[0] - local.x.abs(), h[1] - local.y.abs(), h[2] - local.z.abs()];
            let axis = (0..3).min_by(|a, b| gaps[*a].total_cmp(&gaps[*b])).unwrap();
            let mut nrm = Vector3::zeros();
            nrm[axis] = if local[axis] >= 0.0 { 1.0 } else { -1.0 };
            contact_local[axis] = nrm[axis] * h[axis];
            (radius + gaps[axis], nrm)
        };
        if penetration > 0.0 {
            let normal = Vector3::new(c * normal_local.x - s * normal_local.y, s * normal_local.x + c * normal_local.y, normal_local.z);
            let contact_world = center
                + Vector3::new(
                    c * contact_local.x - s * contact_local.y,
                    s * contact_local.x + c * contact_local.y,
                    contact_local.z,
                );
            let lever = contact_world - center;
            let box_pt_vel = Vector3::new(vel.vx - vel.wz * lever.y, vel.vy + vel.wz * lever.x, 0.0);
            let v_rel = ee_vel - box_pt_vel;
            let v_n = v_rel.dot(&normal);
            let f_n = (cp.stiffness * penetration - cp.damping * v_n).max(0.0);
            let v_t = v_rel - normal * v_n;
            let speed_t = v_t.norm();
            let f_t = if speed_t > 1e-12 {
                -v_t / speed_t * (cp.damping * speed_t).min(cp.tip_friction * f_n)
            } else {
                Vector3::zeros()
            };
            tip_force = normal * f_n + f_t;
        }

        let box_force = -tip_force;
        let lever = {
            let cl = contact_local;
            Vector2::new(c * cl.x - s * cl.y, s * cl.x + c * cl.y)
        };
        let torque_z = lever.x * box_force.y - lever.y * box_force.x;
        let m = box_params.mass;
        let inertia_z = m * ((2.0 * h[0]).powi(2) + (2.0 * h[1]).powi(2)) / 12.0;
        let normal_load = (m * g - box_force.z).max(0.0);
        let mu = box_params.friction_coeff;

        let mut v = Vector2::new(vel.vx, vel.vy) + Vector2::new(box_force.x, box_force.y) * (dt / m);
        let dec = mu * normal_load / m * dt;
        let speed = v.norm();
        v = if speed <= dec { Vector2::zeros() } else { v * (1.0 - dec / speed) };

        // rotational friction from a uniform pressure patch, approximated with
        // an effective radius of a third of the half-extent sum
        let r_eff = (h[0] + h[1]) / 3.0;
        let mut wz = vel.wz + torque_z / inertia_z * dt;
        let dec_w = mu * normal_load * r_eff / inertia_z * dt;
        wz = if wz.abs() <= dec_w { 0.0 } else { wz - dec_w * wz.signum() };

        let mut next = state.clone();
        next.box_vel = BoxVel { vx: v.x, vy: v.y, wz };
        next.box_pose = BoxPose {
            x: pose.x + v.x * dt,
            y: pose.y + v.y * dt,
            yaw: pose.yaw + wz * dt,
        };
        (
            next,
            Wrench {
                force: tip_force,
                moment: Vector3::zeros(),
            },
        )
    }
}
