//! Orientation representations.
//!
//! * 6D: the first two columns of the rotation matrix, recovered by
//!   Gram–Schmidt. Continuous over SO(3), used for Cartesian position
//!   actions.
//! * Euler: intrinsic X-Y-Z angles, `R = Rx(α)·Ry(β)·Rz(γ)`, used for
//!   Cartesian velocity actions (as angle rates).

use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::error::{Error, Result};

/// Cosine of the middle angle below which the Euler decomposition is
/// considered to be at gimbal lock.
pub const GIMBAL_EPS: f64 = 1e-9;

pub fn to_6d(rot: &Rotation3<f64>) -> [f64; 6] {
    let m = rot.matrix();
    [m[(0, 0)], m[(1, 0)], m[(2, 0)], m[(0, 1)], m[(1, 1)], m[(2, 1)]]
}

/// Gram–Schmidt recovery of a rotation from any 6D vector whose two halves
/// are non-zero and non-parallel.
pub fn from_6d(v: &[f64; 6]) -> Result<Rotation3<f64>> {
    let a1 = Vector3::new(v[0], v[1], v[2]);
    let a2 = Vector3::new(v[3], v[4], v[5]);
    let n1 = a1.norm();
    if !(n1 > 1e-12) {
        return Err(Error::DegenerateRotation);
    }
    let b1 = a1 / n1;
    let u2 = a2 - b1 * b1.dot(&a2);
    let n2 = u2.norm();
    if !(n2 > 1e-12) {
        return Err(Error::DegenerateRotation);
    }
    let b2 = u2 / n2;
    let b3 = b1.cross(&b2);
    Ok(Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[b1, b2, b3])))
}

/// Intrinsic XYZ Euler angles with a gimbal-lock flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EulerXyz {
    pub angles: Vector3<f64>,
    /// Set when `|cos β| < GIMBAL_EPS`; then γ is fixed to 0 and α absorbs
    /// the combined rotation.
    pub gimbal_locked: bool,
}

pub fn to_euler_xyz(rot: &Rotation3<f64>) -> EulerXyz {
    let r = rot.matrix();
    let sb = r[(0, 2)].clamp(-1.0, 1.0);
    let beta = sb.asin();
    let cb = (r[(0, 0)].powi(2) + r[(0, 1)].powi(2)).sqrt();
    if cb < GIMBAL_EPS {
        EulerXyz {
            angles: Vector3::new(r[(2, 1)].atan2(r[(1, 1)]), beta, 0.0),
            gimbal_locked: true,
        }
    } else {
        EulerXyz {
            angles: Vector3::new((-r[(1, 2)]).atan2(r[(2, 2)]), beta, (-r[(0, 1)]).atan2(r[(0, 0)])),
            gimbal_locked: false,
        }
    }
}

pub fn from_euler_xyz(angles: &Vector3<f64>) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::x_axis(), angles.x)
        * Rotation3::from_axis_angle(&Vector3::y_axis(), angles.y)
        * Rotation3::from_axis_angle(&Vector3::z_axis(), angles.z)
}

/// Matrix mapping intrinsic XYZ angle rates to world angular velocity at
/// the given angles: `ω = E(α, β)·(α̇, β̇, γ̇)`.
pub fn euler_rate_matrix(angles: &Vector3<f64>) -> Matrix3<f64> {
    let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), angles.x);
    let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), angles.y);
    let ex = Vector3::x();
    let ey = rx * Vector3::y();
    let ez = rx * ry * Vector3::z();
    Matrix3::from_columns(&[ex, ey, ez])
}

/// Rotation error `log(R_d·Rᵀ)` as a world-frame rotation vector.
pub fn rotation_error(desired: &Rotation3<f64>, current: &Rotation3<f64>) -> Vector3<f64> {
    nalgebra::UnitQuaternion::from_rotation_matrix(&(desired * current.inverse())).scaled_axis()
}
