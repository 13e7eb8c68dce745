use nalgebra::{DVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::RewardConfig;

/// Height below which the end effector counts as touching the table (m).
pub const TABLE_CONTACT_HEIGHT: f64 = 0.02;

/// Everything the reward terms read from one transition.
#[derive(Clone, Debug)]
pub struct RewardInputs<'a> {
    pub ee: Vector3<f64>,
    /// Reaching goal, or the object reference point when pushing.
    pub target: Vector3<f64>,
    pub q: &'a DVector<f64>,
    pub dq: &'a DVector<f64>,
    pub q_def: &'a DVector<f64>,
    pub q_min: &'a DVector<f64>,
    pub q_max: &'a DVector<f64>,
    pub action: &'a DVector<f64>,
    pub prev_action: &'a DVector<f64>,
    /// Planar object position and push goal (pushing only).
    pub object: Option<(Vector2<f64>, Vector2<f64>)>,
}

/// Individual reward terms; penalties are stored as positive numbers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub dist: f64,
    pub exact: f64,
    pub push: f64,
    pub vel: f64,
    pub smooth: f64,
    pub neutral: f64,
    pub limit: f64,
    pub collision: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        (self.dist + self.exact + self.push) - (self.vel + self.smooth + self.neutral + self.limit + self.collision)
    }
}

fn shared_terms(x: &RewardInputs, cfg: &RewardConfig) -> RewardTerms {
    let d = (x.ee - x.target).norm();
    let dq2 = x.dq.norm_squared();
    let exact = if d < cfg.epsilon {
        cfg.lambda_eps + 1.0 / (1.0 + 100.0 * dq2)
    } else {
        0.0
    };
    let limit: f64 = (0..x.q.len())
        .map(|i| {
            let to_lo = x.q[i] - x.q_min[i];
            let to_hi = x.q_max[i] - x.q[i];
            let gap = to_lo.abs().min(to_hi.abs());
            (-30.0 * gap * gap).exp()
        })
        .sum();
    RewardTerms {
        dist: cfg.lambda_r / (1.0 + d * d),
        exact,
        push: 0.0,
        vel: cfg.lambda_q * dq2,
        smooth: cfg.lambda_s * (x.action - x.prev_action).norm(),
        neutral: cfg.lambda_n * (x.q_def - x.q).norm(),
        limit: cfg.lambda_l * limit,
        collision: 0.0,
    }
}

/// `r_dist + r_exact − (r_vel + r_smooth + r_neutral + r_limit)`.
pub fn reward_reach(x: &RewardInputs, cfg: &RewardConfig) -> RewardTerms {
    shared_terms(x, cfg)
}

/// Reaching terms toward the object plus `r_push` on the object–goal
/// distance and the table collision penalty.
pub fn reward_push(x: &RewardInputs, cfg: &RewardConfig) -> RewardTerms {
    let mut t = shared_terms(x, cfg);
    if let Some((obj, goal)) = x.object {
        let d = (obj - goal).norm();
        t.push = cfg.lambda_r / (1.0 + d * d);
    }
    if x.ee.z < TABLE_CONTACT_HEIGHT {
        t.collision = cfg.lambda_c;
    }
    t
}
