use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use aspace_core::action::ControllerConfig;
use aspace_core::metrics::{format_table, ote_replay, summarize_trajectories, MetricReport, Trajectory};
use aspace_core::task::{Observation, Perturbation, TaskConfig, TaskEnv};
use aspace_ppo::Checkpoint;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::CliResult;
use crate::layout;
use crate::train::BEST;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const TRAJECTORIES: &str = "trajectories.jsonl";
pub const OTE_CSV: &str = "ote.csv";

/// Evaluation settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    /// Goal-grid points per axis.
    pub grid: usize,
    /// Run joint targets through the deployment filters.
    pub deployment: bool,
    /// Plant used when replaying the logs for OTE.
    pub perturbation: Perturbation,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            grid: 5,
            deployment: true,
            perturbation: Perturbation::STANDARD,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvalOutput {
    pub report: MetricReport,
    pub trajectories: Vec<Trajectory>,
    /// Per-episode OTE, aligned with `trajectories`.
    pub ote: Vec<f64>,
}

/// Environment for evaluating `space` with the deployment filters set as
/// requested.
pub fn eval_env(task: &TaskConfig, space: &str, controller: &ControllerConfig, deployment: bool) -> anyhow::Result<TaskEnv> {
    let ctrl = ControllerConfig {
        deployment,
        ..controller.clone()
    };
    Ok(TaskEnv::new(task.clone(), space, ctrl)?)
}

/// Runs one episode per grid goal with each policy and replays every log
/// under the protocol's perturbation.
pub fn run_protocol(
    template: &TaskEnv,
    policies: &[&dyn Fn(&Observation) -> DVector<f64>],
    protocol: &Protocol,
) -> anyhow::Result<EvalOutput> {
    let goals = template.config().goal_region.grid(protocol.grid);
    let mut env = template.clone();
    let mut trajectories = Vec::with_capacity(goals.len() * policies.len());
    for policy in policies {
        for (k, goal) in goals.iter().enumerate() {
            env.reset(k as u64)?;
            let mut init = env.init().clone();
            init.goal[0] = goal.x;
            init.goal[1] = goal.y;
            let mut obs = env.reset_to(init)?;
            let header = Trajectory::header_for(&env);
            let mut records = Vec::new();
            while !env.is_done() {
                obs = env.step_logged(&policy(&obs), &mut records)?.obs;
            }
            trajectories.push(Trajectory {
                header,
                records,
                end: env.episode_end()?,
            });
        }
    }
    let ote = trajectories
        .iter()
        .map(|t| ote_replay(t, protocol.perturbation, None).map(|r| r.mean))
        .collect::<Result<Vec<_>, _>>()?;
    let report = summarize_trajectories(&trajectories, Some(&ote))?;
    Ok(EvalOutput {
        report,
        trajectories,
        ote,
    })
}

/// Keeps the `k` checkpoints with the highest training episode reward.
pub fn select_best(mut cks: Vec<(PathBuf, Checkpoint)>, k: usize) -> Vec<(PathBuf, Checkpoint)> {
    cks.sort_by(|a, b| {
        let ra = a.1.episode_reward.unwrap_or(f64::NEG_INFINITY);
        let rb = b.1.episode_reward.unwrap_or(f64::NEG_INFINITY);
        rb.total_cmp(&ra).then_with(|| a.0.cmp(&b.0))
    });
    cks.truncate(k.max(1));
    cks
}

/// Best checkpoints of every seed under a space directory.
pub fn run_checkpoints(space_dir: &Path) -> Vec<PathBuf> {
    layout::seed_dirs(space_dir)
        .into_iter()
        .map(|(_, d)| d.join(BEST))
        .filter(|p| p.is_file())
        .collect()
}

pub fn write_outputs(out: &EvalOutput, dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(REPORT_JSON), serde_json::to_vec_pretty(&out.report)?)?;
    std::fs::write(dir.join(REPORT_TXT), format_table(std::slice::from_ref(&out.report)))?;
    Trajectory::save(&out.trajectories, dir.join(TRAJECTORIES))?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join(OTE_CSV))?);
    writeln!(csv, "episode,seed,ote")?;
    for (i, (t, o)) in out.trajectories.iter().zip(&out.ote).enumerate() {
        writeln!(csv, "{i},{},{o}", t.header.seed)?;
    }
    csv.flush()?;
    Ok(())
}

/// Evaluates checkpoints, keeping the `best` highest by training reward.
pub fn cmd_eval(
    paths: &[PathBuf],
    expect_space: Option<&str>,
    best: usize,
    protocol: &Protocol,
    out_dir: &Path,
) -> CliResult<EvalOutput> {
    if paths.is_empty() {
        return crate::error::usage("no checkpoints to evaluate");
    }
    let mut cks = Vec::new();
    for p in paths {
        let ck = Checkpoint::load(p).with_context(|| format!("loading checkpoint {}", p.display()))?;
        if let Some(space) = expect_space {
            if ck.space != space {
                return Err(anyhow!("checkpoint {} was trained for '{}', not '{space}'", p.display(), ck.space).into());
            }
        }
        cks.push((p.clone(), ck));
    }
    let (space, task) = (cks[0].1.space.clone(), cks[0].1.task.clone());
    for (p, ck) in &cks {
        if ck.space != space || ck.task.task != task.task {
            return Err(anyhow!("checkpoint {} mixes spaces or tasks with {}", p.display(), cks[0].0.display()).into());
        }
    }
    let chosen = select_best(cks, best);
    let template = eval_env(&task, &space, &chosen[0].1.controller, protocol.deployment)?;
    for (p, ck) in &chosen {
        if ck.policy.obs_dim() != template.obs_dim() || ck.policy.action_dim() != template.action_dim() {
            return Err(anyhow!("checkpoint {} does not match the {space} environment", p.display()).into());
        }
    }
    let closures: Vec<Box<dyn Fn(&Observation) -> DVector<f64>>> = chosen
        .iter()
        .map(|(_, ck)| {
            let ck = ck.clone();
            Box::new(move |o: &Observation| ck.act(o)) as Box<dyn Fn(&Observation) -> DVector<f64>>
        })
        .collect();
    let refs: Vec<&dyn Fn(&Observation) -> DVector<f64>> = closures.iter().map(|b| b.as_ref()).collect();
    let out = run_protocol(&template, &refs, protocol).context("evaluation")?;
    write_outputs(&out, out_dir)?;
    let selected: Vec<String> = chosen.iter().map(|(p, _)| p.display().to_string()).collect();
    std::fs::write(out_dir.join("selected.json"), serde_json::to_vec_pretty(&selected).map_err(anyhow::Error::from)?)
        .map_err(anyhow::Error::from)?;
    Ok(out)
}

pub(crate) fn ensure_file(path: &Path) -> anyhow::Result<()> {
    if !path.is_file() {
        bail!("{} does not exist", path.display());
    }
    Ok(())
}
