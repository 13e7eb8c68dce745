use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{percentile, EpisodeMetrics};
use crate::error::{Error, Result};

/// Mean, sample standard deviation and 5th/95th percentiles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub p5: f64,
    pub p95: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("input"));
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Ok(Self {
            mean,
            std: var.sqrt(),
            p5: percentile(values, 5.0)?,
            p95: percentile(values, 95.0)?,
            n,
        })
    }
}

/// Metrics of one (space, task) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub space: String,
    pub task: String,
    pub episodes: usize,
    /// Episode reward.
    pub er: Stat,
    /// Success rate in percent.
    pub sr: f64,
    /// Final distance in centimetres.
    pub acc_cm: Stat,
    /// Violating control steps in percent, pooled over episodes.
    pub ecv: f64,
    /// Per-episode ECV in percent.
    pub ecv_episode: Stat,
    pub nte: Option<Stat>,
    /// Offline trajectory error (rad).
    pub ote: Option<Stat>,
    pub violating_steps: u64,
    pub control_steps: u64,
}

pub(super) fn summarize(space: &str, task: &str, episodes: &[EpisodeMetrics]) -> Result<MetricReport> {
    if episodes.is_empty() {
        return Err(Error::Empty("input"));
    }
    let rewards: Vec<f64> = episodes.iter().map(|e| e.reward).collect();
    let dists: Vec<f64> = episodes.iter().map(|e| e.distance * 100.0).collect();
    let successes = episodes.iter().filter(|e| e.success).count();
    let violating: u64 = episodes.iter().map(|e| e.violating_steps).sum();
    let steps: u64 = episodes.iter().map(|e| e.control_steps).sum();
    let per_ep_ecv: Vec<f64> = episodes.iter().filter_map(|e| e.ecv()).map(|v| v * 100.0).collect();
    let ntes: Vec<f64> = episodes.iter().filter_map(|e| e.nte).collect();
    let otes: Vec<f64> = episodes.iter().filter_map(|e| e.ote).collect();
    Ok(MetricReport {
        space: space.to_string(),
        task: task.to_string(),
        episodes: episodes.len(),
        er: Stat::of(&rewards)?,
        sr: 100.0 * successes as f64 / episodes.len() as f64,
        acc_cm: Stat::of(&dists)?,
        ecv: if steps > 0 { 100.0 * violating as f64 / steps as f64 } else { 0.0 },
        ecv_episode: Stat::of(&per_ep_ecv).unwrap_or(Stat {
            mean: 0.0,
            std: 0.0,
            p5: 0.0,
            p95: 0.0,
            n: 0,
        }),
        nte: Stat::of(&ntes).ok(),
        ote: Stat::of(&otes).ok(),
        violating_steps: violating,
        control_steps: steps,
    })
}

fn pm(s: Option<&Stat>, digits: usize) -> String {
    match s {
        Some(s) => format!("{:.*} ± {:.*}", digits, s.mean, digits, s.std),
        None => "-".into(),
    }
}

/// Aligned text table with one row per report.
pub fn format_table(reports: &[MetricReport]) -> String {
    let header = ["space", "task", "n", "ER", "SR %", "ACC cm", "ECV %", "NTE", "OTE rad"];
    let rows: Vec<[String; 9]> = reports
        .iter()
        .map(|r| {
            [
                r.space.clone(),
                r.task.clone(),
                r.episodes.to_string(),
                pm(Some(&r.er), 1),
                format!("{:.0}", r.sr),
                pm(Some(&r.acc_cm), 2),
                format!("{:.0} ± {:.0}", r.ecv, r.ecv_episode.std),
                pm(r.nte.as_ref(), 3),
                pm(r.ote.as_ref(), 3),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths.iter())
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&header.map(String::from), &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&rule, &mut out);
    for row in &rows {
        line(row, &mut out);
    }
    out
}
