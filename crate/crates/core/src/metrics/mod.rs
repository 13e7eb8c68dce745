//! Evaluation metrics over episode logs: episode reward (ER), success rate
//! (SR), accuracy (ACC), expected constraint violations (ECV), normalized
//! tracking error (NTE) and offline trajectory error (OTE).

mod replay;
mod report;
pub mod trajectory;

use serde::{Deserialize, Serialize};

pub use replay::{ote_replay, OteResult};
pub use report::{format_table, MetricReport, Stat};
pub use trajectory::{EpisodeEnd, StepRecord, Trajectory, TrajectoryHeader, SCHEMA_VERSION};

use crate::error::{Error, Result};
use crate::safety::ViolationFlags;

/// Fraction of steps on which any constraint was violated.
pub fn ecv_from_flags(flags: &[ViolationFlags]) -> Result<f64> {
    if flags.is_empty() {
        return Err(Error::Empty("input"));
    }
    Ok(flags.iter().filter(|f| f.any()).count() as f64 / flags.len() as f64)
}

/// ECV pooled over all control steps of all episodes.
pub fn ecv(trajs: &[Trajectory]) -> Result<f64> {
    let (bad, total) = trajs.iter().fold((0usize, 0usize), |(b, t), tr| {
        (b + tr.records.iter().filter(|r| r.flags.any()).count(), t + tr.records.len())
    });
    if total == 0 {
        return Err(Error::Empty("input"));
    }
    Ok(bad as f64 / total as f64)
}

/// Mean of `|v_d,t − v_t+1| / (hi − lo)` over dimensions, then over steps.
pub fn nte_series(targets: &[Vec<f64>], next_feedback: &[Vec<f64>], lo: &[f64], hi: &[f64]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::Empty("input"));
    }
    crate::error::check_len("next feedback", targets.len(), next_feedback.len())?;
    crate::error::check_len("upper limits", lo.len(), hi.len())?;
    if let Some(i) = (0..lo.len()).find(|&i| !(hi[i] > lo[i])) {
        return Err(Error::DegenerateLimits(i));
    }
    let mut total = 0.0;
    for (vd, v) in targets.iter().zip(next_feedback) {
        crate::error::check_len("target", lo.len(), vd.len())?;
        crate::error::check_len("feedback", lo.len(), v.len())?;
        let per_dim: f64 = (0..lo.len()).map(|i| (vd[i] - v[i]).abs() / (hi[i] - lo[i])).sum();
        total += per_dim / lo.len() as f64;
    }
    Ok(total / targets.len() as f64)
}

/// NTE of one episode at the policy rate: the target set at policy step
/// `t` against the feedback at the start of step `t + 1` (or the episode
/// end).
pub fn nte(traj: &Trajectory) -> Result<f64> {
    let starts: Vec<&StepRecord> = traj.records.iter().filter(|r| r.substep == 0).collect();
    if starts.is_empty() {
        return Err(Error::Empty("input"));
    }
    let targets: Vec<Vec<f64>> = starts.iter().map(|r| r.v_d.clone()).collect();
    let mut next: Vec<Vec<f64>> = starts.iter().skip(1).map(|r| r.v.clone()).collect();
    next.push(traj.end.v.clone());
    nte_series(&targets, &next, &traj.header.v_lower, &traj.header.v_upper)
}

/// Per-episode quantities that the report aggregates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// Undiscounted episode reward.
    pub reward: f64,
    pub success: bool,
    /// Final task distance (m).
    pub distance: f64,
    pub violating_steps: u64,
    pub control_steps: u64,
    pub nte: Option<f64>,
    pub ote: Option<f64>,
}

impl EpisodeMetrics {
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        let eps = traj.header.task.reward.epsilon;
        Ok(Self {
            reward: traj.episode_reward(),
            success: traj.end.distance < eps,
            distance: traj.end.distance,
            violating_steps: traj.records.iter().filter(|r| r.flags.any()).count() as u64,
            control_steps: traj.records.len() as u64,
            nte: nte(traj).ok(),
            ote: None,
        })
    }

    pub fn ecv(&self) -> Option<f64> {
        (self.control_steps > 0).then(|| self.violating_steps as f64 / self.control_steps as f64)
    }
}

/// Aggregates episodes of one (space, task) cell.
pub fn summarize(space: &str, task: &str, episodes: &[EpisodeMetrics]) -> Result<MetricReport> {
    report::summarize(space, task, episodes)
}

/// [`summarize`] straight from logs, with optional per-episode OTE values.
pub fn summarize_trajectories(trajs: &[Trajectory], ote: Option<&[f64]>) -> Result<MetricReport> {
    let first = trajs.first().ok_or(Error::Empty("trajectories"))?;
    let mut eps: Vec<EpisodeMetrics> = trajs.iter().map(EpisodeMetrics::from_trajectory).collect::<Result<_>>()?;
    if let Some(ote) = ote {
        crate::error::check_len("OTE values", eps.len(), ote.len())?;
        for (e, o) in eps.iter_mut().zip(ote) {
            e.ote = Some(*o);
        }
    }
    summarize(&first.header.space, first.header.task.task.name(), &eps)
}

/// Linear-interpolation percentile (`p` in [0, 100]) of unsorted values.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("input"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (p.clamp(0.0, 100.0) / 100.0) * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Ok(v[lo] + (v[hi] - v[lo]) * (rank - lo as f64))
}

#[cfg(test)]
mod tests;
