use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::trajectory::Trajectory;
use crate::action::{ActionSpaceKind, SpaceRegistry};
use crate::error::{Error, Result};
use crate::robot::RobotModel;
use crate::task::{Perturbation, TaskEnv};

/// Per-control-step joint error of an open-loop replay and its mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OteResult {
    /// Mean absolute joint error after each control step.
    pub per_step: Vec<f64>,
    pub mean: f64,
}

/// Re-executes the logged actions without a policy in a world with the
/// given perturbation and compares joint positions with the log.
///
/// `space` optionally names the action space the replay is meant for; it
/// must match the log.
pub fn ote_replay(log: &Trajectory, perturbation: Perturbation, space: Option<&str>) -> Result<OteResult> {
    let h = &log.header;
    if let Some(name) = space {
        let kind = ActionSpaceKind::from_name(name);
        if name != h.space && kind != Some(h.kind) {
            return Err(Error::SpaceMismatch {
                log: h.space.clone(),
                replay: name.to_string(),
            });
        }
    }
    let model = Arc::new(RobotModel::new(h.robot.clone())?);
    let mut env = TaskEnv::with_model(h.task.clone(), model, &h.space, h.controller.clone(), &SpaceRegistry::default())?;
    if env.kind() != h.kind {
        return Err(Error::SpaceMismatch {
            log: h.kind.to_string(),
            replay: env.kind().to_string(),
        });
    }
    env.set_perturbation(perturbation)?;
    env.reset_to(h.init.clone())?;

    let mut replayed = Vec::with_capacity(log.records.len());
    for r in log.records.iter().filter(|r| r.substep == 0) {
        if env.is_done() {
            return Err(Error::CorruptLog {
                line: 0,
                msg: "log is longer than the task horizon".into(),
            });
        }
        let a = nalgebra::DVector::from_column_slice(&r.action);
        env.step_logged(&a, &mut replayed)?;
    }
    if replayed.len() != log.records.len() {
        return Err(Error::CorruptLog {
            line: 0,
            msg: format!("replay produced {} steps, log has {}", replayed.len(), log.records.len()),
        });
    }
    let end = env.episode_end()?;
    let logged_after = log.records.iter().skip(1).map(|r| &r.q).chain(std::iter::once(&log.end.q));
    let replay_after = replayed.iter().skip(1).map(|r| &r.q).chain(std::iter::once(&end.q));
    let per_step: Vec<f64> = logged_after
        .zip(replay_after)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
        .collect();
    if per_step.is_empty() {
        return Err(Error::Empty("input"));
    }
    let mean = per_step.iter().sum::<f64>() / per_step.len() as f64;
    Ok(OteResult { per_step, mean })
}
