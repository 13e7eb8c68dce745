use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use aspace_core::action::ActionSpaceKind;
use aspace_core::metrics::{percentile, MetricReport};
use aspace_core::task::TaskKind;
use serde::{Deserialize, Serialize};

use crate::eval::REPORT_JSON;
use crate::layout;
use crate::svg::{band_plot, BandPoint, Series, PALETTE};
use crate::train::read_curve;

/// One table row; `report` is `None` for cells without an evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub task: String,
    pub space: String,
    pub report: Option<MetricReport>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportOutput {
    pub rows: Vec<Row>,
    pub table: String,
    pub files: Vec<PathBuf>,
}

/// Median and 5–95 percentile band across curves, aligned by index. Each
/// curve is a list of `(x, y)`; x is averaged over the curves present.
pub fn band(curves: &[Vec<(f64, f64)>]) -> Vec<BandPoint> {
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .filter_map(|i| {
            let pts: Vec<(f64, f64)> = curves.iter().filter_map(|c| c.get(i).copied()).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let x = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
            Some(BandPoint {
                x,
                median: percentile(&ys, 50.0).ok()?,
                p5: percentile(&ys, 5.0).ok()?,
                p95: percentile(&ys, 95.0).ok()?,
            })
        })
        .collect()
}

fn cell_text(r: Option<&MetricReport>) -> [String; 6] {
    let Some(r) = r else {
        return std::array::from_fn(|_| "-".to_string());
    };
    let pm = |s: Option<&aspace_core::metrics::Stat>, d: usize| {
        s.map_or("-".to_string(), |s| format!("{:.*} ± {:.*}", d, s.mean, d, s.std))
    };
    [
        format!("{:.0}", r.sr),
        pm(Some(&r.acc_cm), 2),
        format!("{:.0} ± {:.0}", r.ecv, r.ecv_episode.std),
        pm(r.nte.as_ref(), 3),
        pm(r.ote.as_ref(), 3),
        pm(Some(&r.er), 1),
    ]
}

/// Aligned table with columns SR, ACC, ECV, NTE, OTE, ER; missing cells
/// print as `-`.
pub fn render_table(rows: &[Row]) -> String {
    let header = ["task", "space", "SR %", "ACC cm", "ECV %", "NTE", "OTE rad", "ER"].map(String::from);
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let label = ActionSpaceKind::from_name(&r.space).map_or(r.space.clone(), |k| k.label().to_string());
            let mut v = vec![r.task.clone(), label];
            v.extend(cell_text(r.report.as_ref()));
            v
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&header);
    line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
    for row in &body {
        line(row);
    }
    out
}

fn reward_curve(seed_dir: &Path) -> Option<Vec<(f64, f64)>> {
    let curve = read_curve(seed_dir).ok()?;
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .filter_map(|p| p.episode_reward.map(|r| (p.env_steps as f64, r)))
        .collect();
    (!pts.is_empty()).then_some(pts)
}

fn space_curves(root: &Path, task: &str, space: &str) -> Vec<Vec<(f64, f64)>> {
    layout::seed_dirs(&layout::space_dir(root, task, space))
        .iter()
        .filter_map(|(_, d)| reward_curve(d))
        .collect()
}

/// Builds the comparison table and plots for a run directory, writing them
/// into `out_dir`.
pub fn cmd_report(root: &Path, out_dir: &Path) -> anyhow::Result<ReportOutput> {
    let tasks: Vec<String> = [TaskKind::Reach, TaskKind::Push]
        .iter()
        .map(|t| t.name().to_string())
        .filter(|t| root.join(t).is_dir())
        .collect();
    let present: Vec<&str> = ActionSpaceKind::ALL
        .iter()
        .map(|k| k.name())
        .filter(|s| tasks.iter().any(|t| layout::space_dir(root, t, s).is_dir()))
        .collect();
    let mut rows = Vec::new();
    for task in &tasks {
        for space in &present {
            let path = layout::space_dir(root, task, space).join("eval").join(REPORT_JSON);
            let report = std::fs::read_to_string(&path)
                .ok()
                .and_then(|t| serde_json::from_str::<MetricReport>(&t).ok());
            rows.push(Row {
                task: task.clone(),
                space: space.to_string(),
                report,
            });
        }
    }
    std::fs::create_dir_all(out_dir)?;
    let table = render_table(&rows);
    let mut files = vec![out_dir.join("table.txt"), out_dir.join("table.json")];
    std::fs::write(&files[0], &table)?;
    std::fs::write(&files[1], serde_json::to_vec_pretty(&rows)?)?;

    for task in &tasks {
        let mut all = Vec::new();
        for (i, space) in present.iter().enumerate() {
            let curves = space_curves(root, task, space);
            if curves.is_empty() {
                continue;
            }
            let label = ActionSpaceKind::from_name(space).map_or(space.to_string(), |k| k.label().to_string());
            let series = Series {
                label: label.clone(),
                color: PALETTE[i % PALETTE.len()].to_string(),
                band: band(&curves),
            };
            let path = out_dir.join(format!("curve_{task}_{space}.svg"));
            std::fs::write(&path, band_plot(&format!("{task}: {label}"), "environment steps", "episode reward", &[series]))?;
            files.push(path);
            all.push((*space, curves));
        }
        if all.is_empty() {
            continue;
        }
        let groups: [(&str, [(&str, fn(ActionSpaceKind) -> bool); 2]); 2] = [
            ("joint_vs_cartesian", [("J", ActionSpaceKind::is_joint), ("C", ActionSpaceKind::is_cartesian)]),
            (
                "position_vs_velocity",
                [("position", ActionSpaceKind::is_position), ("velocity", ActionSpaceKind::is_velocity)],
            ),
        ];
        for (name, members) in groups {
            let series: Vec<Series> = members
                .iter()
                .enumerate()
                .filter_map(|(i, (label, pred))| {
                    let curves: Vec<Vec<(f64, f64)>> = all
                        .iter()
                        .filter(|(s, _)| ActionSpaceKind::from_name(s).is_some_and(*pred))
                        .flat_map(|(_, c)| c.iter().cloned())
                        .collect();
                    (!curves.is_empty()).then(|| Series {
                        label: label.to_string(),
                        color: PALETTE[i].to_string(),
                        band: band(&curves),
                    })
                })
                .collect();
            if series.is_empty() {
                continue;
            }
            let path = out_dir.join(format!("group_{task}_{name}.svg"));
            let title = format!("{task}: {}", name.replace('_', " "));
            std::fs::write(&path, band_plot(&title, "environment steps", "episode reward", &series))?;
            files.push(path);
        }
    }
    Ok(ReportOutput { rows, table, files })
}
