use std::io::Write;
use std::path::Path;

use anyhow::Context;
use aspace_core::metrics::{ote_replay, Trajectory};
use aspace_core::task::Perturbation;
use serde::{Deserialize, Serialize};

use crate::error::CliResult;
use crate::eval::ensure_file;

/// OTE of every episode in a log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OteReport {
    pub log: String,
    pub perturbation: Perturbation,
    pub episodes: usize,
    pub mean: f64,
    pub per_episode: Vec<f64>,
}

/// Replays `log` under `perturbation`; writes `ote_steps.csv` and
/// `ote_summary.json` into `out_dir` when given.
pub fn cmd_replay_ote(
    log: &Path,
    perturbation: Perturbation,
    space: Option<&str>,
    out_dir: Option<&Path>,
) -> CliResult<OteReport> {
    ensure_file(log)?;
    let trajs = Trajectory::load(log).with_context(|| format!("reading {}", log.display()))?;
    let mut per_episode = Vec::with_capacity(trajs.len());
    let mut steps = Vec::new();
    for (i, t) in trajs.iter().enumerate() {
        let r = ote_replay(t, perturbation, space).with_context(|| format!("replaying episode {i}"))?;
        per_episode.push(r.mean);
        steps.push(r.per_step);
    }
    let n = per_episode.len();
    let report = OteReport {
        log: log.display().to_string(),
        perturbation,
        episodes: n,
        mean: if n > 0 { per_episode.iter().sum::<f64>() / n as f64 } else { 0.0 },
        per_episode,
    };
    if let Some(dir) = out_dir {
        write(dir, &report, &steps)?;
    }
    Ok(report)
}

fn write(dir: &Path, report: &OteReport, steps: &[Vec<f64>]) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("ote_steps.csv"))?);
    writeln!(csv, "episode,step,error")?;
    for (e, s) in steps.iter().enumerate() {
        for (k, v) in s.iter().enumerate() {
            writeln!(csv, "{e},{k},{v}")?;
        }
    }
    csv.flush()?;
    std::fs::write(dir.join("ote_summary.json"), serde_json::to_vec_pretty(report)?)?;
    Ok(())
}
