//! Reaching and pushing environments.

mod env;
mod reward;
mod scripted;
mod vec_env;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use env::{EpisodeInit, Observation, Perturbation, StepOutcome, TaskEnv};
pub use reward::{reward_push, reward_reach, RewardInputs, RewardTerms};
pub use scripted::ScriptedPolicy;
pub use vec_env::{VecEnv, VecStep};

use crate::dynamics::BoxParams;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Reach,
    Push,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Reach => "reach",
            TaskKind::Push => "push",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "reach" => Some(TaskKind::Reach),
            "push" => Some(TaskKind::Push),
            _ => None,
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Axis-aligned box `[min, max]`; a degenerate axis is allowed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Region {
    pub fn sample(&self, rng: &mut impl Rng) -> Vector3<f64> {
        Vector3::from_fn(|i, _| uniform(rng, self.min[i], self.max[i]))
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Evenly spaced points, `per_axis` along each non-degenerate axis.
    pub fn grid(&self, per_axis: usize) -> Vec<Vector3<f64>> {
        let axis = |i: usize| -> Vec<f64> {
            let (lo, hi) = (self.min[i], self.max[i]);
            if hi == lo || per_axis <= 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..per_axis).map(|k| lo + (hi - lo) * k as f64 / (per_axis - 1) as f64).collect()
            }
        };
        let (xs, ys, zs) = (axis(0), axis(1), axis(2));
        let mut out = Vec::with_capacity(xs.len() * ys.len() * zs.len());
        for &x in &xs {
            for &y in &ys {
                for &z in &zs {
                    out.push(Vector3::new(x, y, z));
                }
            }
        }
        out
    }

    fn validate(&self, what: &str) -> Result<()> {
        if (0..3).any(|i| !(self.min[i].is_finite() && self.max[i].is_finite() && self.min[i] <= self.max[i])) {
            return Err(Error::InvalidConfig(format!("{what}: min must not exceed max")));
        }
        Ok(())
    }
}

pub(crate) fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Per-episode sampling ranges for the box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomizationRanges {
    pub friction: [f64; 2],
    pub mass: [f64; 2],
}

/// Samples friction and mass uniformly in their ranges; the size is kept.
pub fn domain_randomize(params: &BoxParams, ranges: &RandomizationRanges, rng: &mut impl Rng) -> BoxParams {
    BoxParams {
        friction_coeff: uniform(rng, ranges.friction[0], ranges.friction[1]),
        mass: uniform(rng, ranges.mass[0], ranges.mass[1]),
        half_extents: params.half_extents,
    }
}

/// Reward weights, success radius, horizon and discount.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub lambda_r: f64,
    pub lambda_eps: f64,
    pub lambda_q: f64,
    pub lambda_n: f64,
    pub lambda_l: f64,
    pub lambda_s: f64,
    pub lambda_c: f64,
    /// Success radius (m).
    pub epsilon: f64,
    /// Episode length in policy steps.
    pub horizon: usize,
    pub gamma: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            lambda_r: 1.0,
            lambda_eps: 5.0,
            lambda_q: 0.01,
            lambda_n: 0.05,
            lambda_l: 1.0,
            lambda_s: 0.05,
            lambda_c: 1.0,
            epsilon: 0.02,
            horizon: 100,
            gamma: 0.99,
        }
    }
}

impl RewardConfig {
    /// All weights zero.
    pub fn zero_weights(self) -> Self {
        Self {
            lambda_r: 0.0,
            lambda_eps: 0.0,
            lambda_q: 0.0,
            lambda_n: 0.0,
            lambda_l: 0.0,
            lambda_s: 0.0,
            lambda_c: 0.0,
            ..self
        }
    }

    fn validate(&self) -> Result<()> {
        let weights = [
            self.lambda_r,
            self.lambda_eps,
            self.lambda_q,
            self.lambda_n,
            self.lambda_l,
            self.lambda_s,
            self.lambda_c,
        ];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidConfig("reward weights must be nonnegative".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig("gamma must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Task description as stored in JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub task: TaskKind,
    /// Built-in robot name or path to a robot description.
    pub robot: String,
    /// Goal sampling region; the z range is ignored for pushing.
    pub goal_region: Region,
    /// Initial box position region (pushing).
    #[serde(default)]
    pub box_region: Option<Region>,
    #[serde(default)]
    pub r#box: BoxParams,
    #[serde(default)]
    pub randomization: Option<RandomizationRanges>,
    /// Half-width of the uniform noise added to the default posture (rad).
    #[serde(default)]
    pub init_noise: f64,
    #[serde(default)]
    pub reward: RewardConfig,
    /// Consecutive successful steps that end an evaluation episode early;
    /// 0 disables early termination.
    #[serde(default)]
    pub success_hold: usize,
}

const BUILTIN: [(&str, &str); 4] = [
    ("reach_planar3", include_str!("../../tasks/reach_planar3.json")),
    ("push_planar3", include_str!("../../tasks/push_planar3.json")),
    ("reach_panda7", include_str!("../../tasks/reach_panda7.json")),
    ("push_panda7", include_str!("../../tasks/push_panda7.json")),
];

impl TaskConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Built-in configuration for a task and robot, e.g. `("reach", "planar3")`.
    pub fn builtin(task: TaskKind, robot: &str) -> Option<Self> {
        let key = format!("{}_{}", task.name(), robot);
        BUILTIN
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, text)| Self::from_json(text).expect("built-in task config is valid"))
    }

    /// `reach`, `push`, `reach:panda7` or a path to a JSON file.
    pub fn load(spec: &str) -> Result<Self> {
        let (task, robot) = spec.split_once(':').unwrap_or((spec, "planar3"));
        if let Some(kind) = TaskKind::from_name(task) {
            return Self::builtin(kind, robot)
                .ok_or_else(|| Error::InvalidConfig(format!("no built-in {task} task for robot '{robot}'")));
        }
        Self::from_json(&std::fs::read_to_string(spec)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.goal_region.validate("goal_region")?;
        self.reward.validate()?;
        if !(self.init_noise.is_finite() && self.init_noise >= 0.0) {
            return Err(Error::InvalidConfig("init_noise must be nonnegative".into()));
        }
        if let Some(r) = &self.randomization {
            for (name, [lo, hi]) in [("friction", r.friction), ("mass", r.mass)] {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= 0.0) {
                    return Err(Error::InvalidConfig(format!("randomization {name}: need 0 <= lo <= hi")));
                }
            }
            if r.mass[0] <= 0.0 {
                return Err(Error::InvalidConfig("randomized box mass must be positive".into()));
            }
        }
        if self.task == TaskKind::Push {
            let region = self
                .box_region
                .ok_or_else(|| Error::InvalidConfig("push task needs box_region".into()))?;
            region.validate("box_region")?;
            if self.r#box.mass <= 0.0 || self.r#box.half_extents.iter().any(|h| *h <= 0.0) {
                return Err(Error::InvalidConfig("box mass and size must be positive".into()));
            }
        }
        Ok(())
    }
}
