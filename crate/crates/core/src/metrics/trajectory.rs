//! JSON-lines episode logs.
//!
//! A log is one `header` line, one `step` line per control step and a final
//! `end` line with the state after the last step.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::action::{ActionSpaceKind, ControllerConfig};
use crate::dynamics::BoxPose;
use crate::error::{Error, Result};
use crate::robot::RobotDescription;
use crate::safety::ViolationFlags;
use crate::task::{EpisodeInit, Perturbation, TaskConfig, TaskEnv};

pub const SCHEMA_VERSION: u32 = 1;

/// Everything needed to rebuild the episode's environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub schema_version: u32,
    pub space: String,
    pub kind: ActionSpaceKind,
    pub task: TaskConfig,
    pub robot: RobotDescription,
    pub controller: ControllerConfig,
    pub perturbation: Perturbation,
    pub seed: u64,
    pub init: EpisodeInit,
    /// Limits of the control target `v_d`.
    pub v_lower: Vec<f64>,
    pub v_upper: Vec<f64>,
}

/// State at the start of one control step and what was applied during it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub time: f64,
    pub policy_step: u64,
    pub substep: u32,
    pub action: Vec<f64>,
    pub v_d: Vec<f64>,
    /// Feedback in the units of `v_d`.
    pub v: Vec<f64>,
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    pub ee_pos: [f64; 3],
    /// Orientation as (w, x, y, z).
    pub ee_quat: [f64; 4],
    /// Torque reaching the joints (after any control delay).
    pub tau: Vec<f64>,
    pub q_d: Vec<f64>,
    pub goal: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_pose: Option<BoxPose>,
    /// Policy-step reward, stored on the last substep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    pub flags: ViolationFlags,
}

/// State after the final step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEnd {
    pub time: f64,
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    pub v: Vec<f64>,
    pub ee_pos: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_pose: Option<BoxPose>,
    /// Final task distance (m).
    pub distance: f64,
    pub success: bool,
    pub policy_steps: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub header: TrajectoryHeader,
    pub records: Vec<StepRecord>,
    pub end: EpisodeEnd,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Line {
    Header(Box<TrajectoryHeader>),
    Step(Box<StepRecord>),
    End(Box<EpisodeEnd>),
}

impl Trajectory {
    /// Runs one episode from `seed` with `policy` and logs every control
    /// step.
    pub fn record(
        env: &mut TaskEnv,
        seed: u64,
        mut policy: impl FnMut(&TaskEnv) -> Result<nalgebra::DVector<f64>>,
    ) -> Result<Trajectory> {
        env.reset(seed)?;
        let mut records = Vec::with_capacity(env.config().reward.horizon * crate::ACTION_REPEAT);
        let header = Self::header_for(env);
        while !env.is_done() {
            let a = policy(env)?;
            env.step_logged(&a, &mut records)?;
        }
        Ok(Trajectory {
            header,
            records,
            end: env.episode_end()?,
        })
    }

    /// Header describing the episode `env` was last reset to.
    pub fn header_for(env: &TaskEnv) -> TrajectoryHeader {
        let (lo, hi) = env.controller().space().limits();
        TrajectoryHeader {
            schema_version: SCHEMA_VERSION,
            space: env.space_name().to_string(),
            kind: env.kind(),
            task: env.config().clone(),
            robot: env.model().description().clone(),
            controller: env.controller_config().clone(),
            perturbation: env.perturbation(),
            seed: env.seed(),
            init: env.init().clone(),
            v_lower: lo.as_slice().to_vec(),
            v_upper: hi.as_slice().to_vec(),
        }
    }

    pub fn episode_reward(&self) -> f64 {
        self.records.iter().filter_map(|r| r.reward).sum()
    }

    pub fn policy_steps(&self) -> usize {
        self.records.iter().filter(|r| r.substep == 0).count()
    }

    /// Writes the log as JSON lines.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        serde_json::to_writer(&mut w, &Line::Header(Box::new(self.header.clone())))?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, &Line::Step(Box::new(r.clone())))?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut w, &Line::End(Box::new(self.end.clone())))?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    /// Reads every episode in a JSON-lines stream.
    pub fn read_jsonl(r: impl BufRead) -> Result<Vec<Trajectory>> {
        let mut out = Vec::new();
        let mut header: Option<TrajectoryHeader> = None;
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |msg: String| Error::CorruptLog { line: i + 1, msg };
            let parsed: Line = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            match parsed {
                Line::Header(h) => {
                    if header.is_some() {
                        return Err(corrupt("header before previous episode ended".into()));
                    }
                    if h.schema_version != SCHEMA_VERSION {
                        return Err(Error::SchemaVersion(h.schema_version));
                    }
                    header = Some(*h);
                }
                Line::Step(s) => {
                    if header.is_none() {
                        return Err(corrupt("step before header".into()));
                    }
                    if s.step != records.len() as u64 {
                        return Err(corrupt(format!("expected step {}, found {}", records.len(), s.step)));
                    }
                    records.push(*s);
                }
                Line::End(e) => {
                    let header = header.take().ok_or_else(|| corrupt("end before header".into()))?;
                    out.push(Trajectory {
                        header,
                        records: std::mem::take(&mut records),
                        end: *e,
                    });
                }
            }
        }
        if header.is_some() {
            return Err(Error::CorruptLog {
                line: 0,
                msg: "log ends inside an episode".into(),
            });
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Vec<Trajectory>> {
        Self::read_jsonl(text.as_bytes())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Vec<Trajectory>> {
        let f = std::fs::File::open(path)?;
        Self::read_jsonl(std::io::BufReader::new(f))
    }

    pub fn save(trajs: &[Trajectory], path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        for t in trajs {
            t.write_jsonl(&mut w)?;
        }
        w.flush()?;
        Ok(())
    }
}
