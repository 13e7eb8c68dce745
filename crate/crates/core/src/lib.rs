//! Action-space benchmarking for torque-controlled serial arms.
//!
//! The crate is organised bottom-up:
//!
//! * [`robot`] kinematics of a serial manipulator (FK, Jacobian, damped IK)
//!   and orientation representations.
//! * [`dynamics`] rigid-body dynamics, semi-implicit stepping and the planar
//!   box contact used by the pushing task.
//! * [`action`] the thirteen action spaces, each turning a normalised policy
//!   action into joint torques, registered by name.
//! * [`safety`] low-pass filter, rate limiter and constraint checker.
//! * [`task`] reaching and pushing environments.
//! * [`metrics`] trajectory logs, replay and the evaluation metrics.

pub mod action;
pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod robot;
pub mod safety;
pub mod task;

pub use error::{Error, Result};

/// Rate of the torque controller and physics (Hz).
pub const CONTROL_HZ: f64 = 120.0;
/// Rate at which the policy emits actions (Hz).
pub const POLICY_HZ: f64 = 60.0;
/// Controller steps per policy step (action repeat).
pub const ACTION_REPEAT: usize = 2;

/// Controller period (s).
pub fn control_dt() -> f64 {
    1.0 / CONTROL_HZ
}

/// Policy period (s).
pub fn policy_dt() -> f64 {
    1.0 / POLICY_HZ
}
