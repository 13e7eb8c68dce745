use nalgebra::{DMatrix, DVector, Isometry3, Matrix6xX, Rotation3, UnitQuaternion, Vector3};

use super::{Pose, RobotModel, Twist};
use crate::error::Result;

/// World-frame placement of every joint and link for one configuration.
#[derive(Clone, Debug)]
pub struct LinkFrames {
    /// Origin of each joint frame.
    pub joint_pos: Vec<Vector3<f64>>,
    /// Rotation axis of each joint in world coordinates.
    pub joint_axis: Vec<Vector3<f64>>,
    /// Orientation of each link frame (after the joint rotation).
    pub link_rot: Vec<Rotation3<f64>>,
    /// Centre of mass of each link.
    pub com: Vec<Vector3<f64>>,
    pub ee: Isometry3<f64>,
}

pub fn link_frames(model: &RobotModel, q: &DVector<f64>) -> Result<LinkFrames> {
    model.check_q(q)?;
    let n = model.n_joints();
    let mut frames = LinkFrames {
        joint_pos: Vec::with_capacity(n),
        joint_axis: Vec::with_capacity(n),
        link_rot: Vec::with_capacity(n),
        com: Vec::with_capacity(n),
        ee: Isometry3::identity(),
    };
    let mut t = Isometry3::identity();
    for i in 0..n {
        t *= model.origins[i];
        t *= UnitQuaternion::from_axis_angle(&model.axes[i], q[i]);
        frames.joint_pos.push(t.translation.vector);
        frames.joint_axis.push(t.rotation * model.axes[i].into_inner());
        frames.link_rot.push(t.rotation.to_rotation_matrix());
        frames.com.push(t.transform_point(&model.coms[i].into()).coords);
    }
    frames.ee = t * model.tool;
    Ok(frames)
}

pub fn forward_kinematics(model: &RobotModel, q: &DVector<f64>) -> Result<Pose> {
    Ok(Pose::from_isometry(&link_frames(model, q)?.ee))
}

/// Geometric Jacobian of an arbitrary point rigidly attached to the last link.
pub fn jacobian_from_frames(frames: &LinkFrames, point: &Vector3<f64>) -> Matrix6xX<f64> {
    let n = frames.joint_pos.len();
    let mut jac = Matrix6xX::zeros(n);
    for i in 0..n {
        let z = frames.joint_axis[i];
        let lin = z.cross(&(point - frames.joint_pos[i]));
        jac.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
        jac.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
    }
    jac
}

/// Geometric Jacobian of the end effector; rows are (linear, angular).
pub fn jacobian(model: &RobotModel, q: &DVector<f64>) -> Result<Matrix6xX<f64>> {
    let frames = link_frames(model, q)?;
    let p = frames.ee.translation.vector;
    Ok(jacobian_from_frames(&frames, &p))
}

/// Damped pseudoinverse through the SVD: singular values map to
/// `s / (s² + λ²)`; with `λ = 0` values below 1e-12 are treated as zero.
pub(crate) fn damped_pinv(jac: &Matrix6xX<f64>, damping: f64) -> DMatrix<f64> {
    let m = DMatrix::from_column_slice(6, jac.ncols(), jac.as_slice());
    let svd = m.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let lambda2 = damping * damping;
    let inv = svd.singular_values.map(|s| {
        if damping == 0.0 {
            if s > 1e-12 {
                1.0 / s
            } else {
                0.0
            }
        } else {
            s / (s * s + lambda2)
        }
    });
    v_t.transpose() * DMatrix::from_diagonal(&inv) * u.transpose()
}

/// Velocity-level IK with a null-space pull toward the default posture:
/// `dq = J⁺ẋ + (I − J⁺J)·k_null·(q_def − q)`, clipped to ±`dq_max`.
pub fn ik_velocity(
    model: &RobotModel,
    q: &DVector<f64>,
    xd_dot: &Twist,
    damping: f64,
    k_null: f64,
) -> Result<DVector<f64>> {
    let jac = jacobian(model, q)?;
    Ok(ik_velocity_with_jacobian(model, q, &jac, xd_dot, damping, k_null))
}

pub(crate) fn ik_velocity_with_jacobian(
    model: &RobotModel,
    q: &DVector<f64>,
    jac: &Matrix6xX<f64>,
    xd_dot: &Twist,
    damping: f64,
    k_null: f64,
) -> DVector<f64> {
    let n = model.n_joints();
    let pinv = damped_pinv(jac, damping);
    let xv = DVector::from_column_slice(xd_dot.to_vector().as_slice());
    let mut dq = &pinv * xv;
    if k_null != 0.0 {
        let jm = DMatrix::from_column_slice(6, n, jac.as_slice());
        let proj = DMatrix::identity(n, n) - &pinv * jm;
        dq += proj * ((model.q_def() - q) * k_null);
    }
    let lim = model.dq_max();
    dq.zip_map(lim, |v, l| v.clamp(-l, l))
}

/// Position-only IK by damped Gauss–Newton iterations from `q_start`.
/// Returns the final configuration (clamped to the joint limits) and its
/// remaining position error.
pub fn solve_position_ik(
    model: &RobotModel,
    q_start: &DVector<f64>,
    target: &Vector3<f64>,
    iterations: usize,
) -> Result<(DVector<f64>, f64)> {
    let mut q = q_start.clone();
    for _ in 0..iterations {
        let frames = link_frames(model, &q)?;
        let p = frames.ee.translation.vector;
        let e = target - p;
        if e.norm() < 1e-10 {
            break;
        }
        let jac = jacobian_from_frames(&frames, &p);
        let jp = DMatrix::from_fn(3, model.n_joints(), |r, c| jac[(r, c)]);
        let svd = jp.svd(true, true);
        let step = svd
            .solve(&DVector::from_column_slice(e.as_slice()), 1e-9)
            .unwrap_or_else(|_| DVector::zeros(model.n_joints()));
        let norm = step.norm();
        let step = if norm > 0.2 { step * (0.2 / norm) } else { step };
        q = (q + step).zip_zip_map(model.q_min(), model.q_max(), |v, lo, hi| v.clamp(lo, hi));
    }
    let p = forward_kinematics(model, &q)?.position;
    Ok((q, (target - p).norm()))
}
