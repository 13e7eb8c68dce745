use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use aspace_core::metrics::Trajectory;
use aspace_core::task::{TaskConfig, TaskEnv};
use aspace_ppo::{train, Checkpoint, CurvePoint};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::layout;

pub const BEST: &str = "best.json";
pub const LAST: &str = "last.json";
pub const CURVE_JSON: &str = "curve.json";
pub const CURVE_CSV: &str = "curve.csv";
pub const SAMPLES: &str = "samples.jsonl";

/// One (task, space, seed) training run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub task: String,
    pub space: String,
    pub seed: u64,
    pub dir: PathBuf,
}

impl Cell {
    pub fn is_done(&self) -> bool {
        layout::is_done(&self.dir)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrainSummary {
    pub scheduled: usize,
    pub skipped: usize,
    pub trained: usize,
}

/// Cells for every requested space and seed.
pub fn plan(cfg: &RunConfig, root: &Path) -> CliResult<Vec<Cell>> {
    let task = cfg.task_config()?.task.name().to_string();
    let spaces = cfg.space_names()?;
    Ok(spaces
        .iter()
        .flat_map(|space| {
            let task = task.clone();
            cfg.seeds.iter().map(move |&seed| Cell {
                dir: layout::cell_dir(root, &task, space, seed),
                task: task.clone(),
                space: space.clone(),
                seed,
            })
        })
        .collect())
}

pub fn write_curve(dir: &Path, curve: &[CurvePoint]) -> anyhow::Result<()> {
    std::fs::write(dir.join(CURVE_JSON), serde_json::to_vec(curve)?)?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join(CURVE_CSV))?);
    writeln!(
        csv,
        "iteration,env_steps,episode_reward,success_rate,episodes,policy_loss,value_loss,entropy,approx_kl,clip_fraction,eval_success,eval_reward"
    )?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for p in curve {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            p.iteration,
            p.env_steps,
            opt(p.episode_reward),
            opt(p.success_rate),
            p.episodes,
            p.policy_loss,
            p.value_loss,
            p.entropy,
            p.approx_kl,
            p.clip_fraction,
            opt(p.eval.map(|e| e.success_rate)),
            opt(p.eval.map(|e| e.episode_reward)),
        )?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_curve(dir: &Path) -> anyhow::Result<Vec<CurvePoint>> {
    let path = dir.join(CURVE_JSON);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Trains one cell and writes its checkpoints, curve and sample episodes.
pub fn train_cell(cfg: &RunConfig, task: &TaskConfig, cell: &Cell, verbose: bool) -> anyhow::Result<()> {
    std::fs::create_dir_all(&cell.dir).with_context(|| format!("creating {}", cell.dir.display()))?;
    std::fs::write(cell.dir.join("run.json"), serde_json::to_vec_pretty(cfg)?)?;
    let label = format!("{}/{}/seed{}", cell.task, cell.space, cell.seed);
    let out = train(
        task.clone(),
        &cell.space,
        cfg.controller.clone(),
        cfg.ppo.clone(),
        cell.seed,
        |p| {
            if verbose && p.iteration % 10 == 0 {
                eprintln!(
                    "{label}: iter {} steps {} ER {} SR {}",
                    p.iteration,
                    p.env_steps,
                    p.episode_reward.map_or("-".into(), |v| format!("{v:.1}")),
                    p.success_rate.map_or("-".into(), |v| format!("{:.0}%", 100.0 * v)),
                );
            }
        },
    )
    .with_context(|| format!("training {label}"))?;
    out.best.save(&cell.dir.join(BEST))?;
    out.last.save(&cell.dir.join(LAST))?;
    write_curve(&cell.dir, &out.curve)?;
    write_samples(&out.best, cfg.samples, &cell.dir.join(SAMPLES))?;
    layout::mark_done(&cell.dir)?;
    Ok(())
}

fn write_samples(ck: &Checkpoint, episodes: usize, path: &Path) -> anyhow::Result<()> {
    let mut env = TaskEnv::new(ck.task.clone(), &ck.space, ck.controller.clone())?;
    let trajs = (0..episodes as u64)
        .map(|seed| Trajectory::record(&mut env, seed, |e| Ok(ck.act(&e.observation()))))
        .collect::<Result<Vec<_>, _>>()?;
    Trajectory::save(&trajs, path)?;
    Ok(())
}

/// Runs every cell of `cells` not yet marked done, `workers` at a time.
pub fn run_cells(cfg: &RunConfig, cells: &[Cell], verbose: bool) -> CliResult<TrainSummary> {
    let task = cfg.task_config()?;
    let pending: Vec<&Cell> = cells.iter().filter(|c| !c.is_done()).collect();
    let summary = TrainSummary {
        scheduled: cells.len(),
        skipped: cells.len() - pending.len(),
        trained: pending.len(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Runtime(e.into()))?;
    let failures: Vec<String> = pool.install(|| {
        pending
            .par_iter()
            .filter_map(|cell| train_cell(cfg, &task, cell, verbose).err().map(|e| format!("{e:#}")))
            .collect()
    });
    if !failures.is_empty() {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "{} of {} runs failed:\n{}",
            failures.len(),
            pending.len(),
            failures.join("\n")
        )));
    }
    Ok(summary)
}

pub fn cmd_train(cfg: &RunConfig, root: &Path, dry_run: bool, verbose: bool) -> CliResult<TrainSummary> {
    cfg.validate()?;
    let cells = plan(cfg, root)?;
    if dry_run {
        let skipped = cells.iter().filter(|c| c.is_done()).count();
        return Ok(TrainSummary {
            scheduled: cells.len(),
            skipped,
            trained: 0,
        });
    }
    run_cells(cfg, &cells, verbose)
}
