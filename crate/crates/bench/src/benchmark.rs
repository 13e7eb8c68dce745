use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::eval::{cmd_eval, run_checkpoints, Protocol, REPORT_JSON};
use crate::layout;
use crate::report::{cmd_report, ReportOutput};
use crate::train::{plan, run_cells, Cell};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Pending,
    Done,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteCell {
    pub cell: Cell,
    pub status: CellStatus,
}

/// Every (task, space, seed) cell of a sweep with its status.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSuite {
    pub root: PathBuf,
    pub cells: Vec<SuiteCell>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchmarkSummary {
    pub cells: usize,
    pub trained: usize,
    pub evaluated: usize,
    pub report: ReportOutput,
}

fn task_config(cfg: &RunConfig, task: &str) -> RunConfig {
    RunConfig {
        task: task.to_string(),
        ..cfg.clone()
    }
}

impl BenchmarkSuite {
    pub fn plan(cfg: &RunConfig, tasks: &[String], root: &Path) -> CliResult<Self> {
        let mut cells = Vec::new();
        for task in tasks {
            let per_task = task_config(cfg, task);
            per_task.validate()?;
            for cell in plan(&per_task, root)? {
                let status = if cell.is_done() { CellStatus::Done } else { CellStatus::Pending };
                cells.push(SuiteCell { cell, status });
            }
        }
        Ok(Self {
            root: root.to_path_buf(),
            cells,
        })
    }

    pub fn pending(&self) -> usize {
        self.cells.iter().filter(|c| c.status == CellStatus::Pending).count()
    }

    /// Distinct `(task, space)` pairs in plan order.
    pub fn groups(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        for c in &self.cells {
            let key = (c.cell.task.clone(), c.cell.space.clone());
            if !out.contains(&key) {
                out.push(key);
            }
        }
        out
    }
}

/// Trains pending cells, evaluates the best seeds of every (task, space)
/// without a report and writes the comparison report.
pub fn cmd_benchmark(
    cfg: &RunConfig,
    tasks: &[String],
    root: &Path,
    dry_run: bool,
    verbose: bool,
) -> CliResult<(BenchmarkSuite, BenchmarkSummary)> {
    let suite = BenchmarkSuite::plan(cfg, tasks, root)?;
    let mut summary = BenchmarkSummary {
        cells: suite.cells.len(),
        ..Default::default()
    };
    if dry_run {
        return Ok((suite, summary));
    }
    for task in tasks {
        let per_task = task_config(cfg, task);
        let cells = plan(&per_task, root)?;
        summary.trained += run_cells(&per_task, &cells, verbose)?.trained;
    }
    let protocol = Protocol {
        grid: cfg.eval_grid,
        deployment: cfg.deployment,
        perturbation: cfg.perturbation.resolve()?,
    };
    for (task, space) in suite.groups() {
        let space_dir = layout::space_dir(root, &task, &space);
        let eval_dir = space_dir.join("eval");
        if layout::is_done(&eval_dir) {
            continue;
        }
        let cks = run_checkpoints(&space_dir);
        if cks.is_empty() {
            continue;
        }
        cmd_eval(&cks, Some(&space), cfg.best, &protocol, &eval_dir)?;
        layout::mark_done(&eval_dir).map_err(|e| CliError::Runtime(e.into()))?;
        debug_assert!(eval_dir.join(REPORT_JSON).is_file());
        summary.evaluated += 1;
    }
    summary.report = cmd_report(root, &root.join("report"))?;
    let refreshed = BenchmarkSuite::plan(cfg, tasks, root)?;
    Ok((refreshed, summary))
}
