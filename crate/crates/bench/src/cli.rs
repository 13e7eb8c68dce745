use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::benchmark::cmd_benchmark;
use crate::config::{expand_spaces, parse_seeds, PerturbationProfile, RunConfig};
use crate::error::{usage, CliResult};
use crate::eval::{cmd_eval, run_checkpoints, Protocol};
use crate::layout;
use crate::replay::cmd_replay_ote;
use crate::report::cmd_report;
use crate::train::cmd_train;

#[derive(Debug, Parser)]
#[command(name = "aspace", version, about = "Action-space benchmark for robot arm policies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one policy per (space, seed).
    Train(TrainArgs),
    /// Evaluate checkpoints on the goal grid with deployment filters.
    Eval(EvalArgs),
    /// Replay a trajectory log open loop in a perturbed plant.
    ReplayOte(ReplayArgs),
    /// Aggregate a run directory into a table and plots.
    Report(ReportArgs),
    /// Train, evaluate and report every space on every task.
    Benchmark(BenchArgs),
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// JSON run config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// reach, push, reach:panda7 or a task JSON file.
    #[arg(long)]
    pub task: Option<String>,
    /// Action space names (comma separated) or `all`.
    #[arg(long, value_delimiter = ',')]
    pub space: Vec<String>,
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Seed list: `0..4` (inclusive) or `1,5,9`.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub total_steps: Option<usize>,
    /// Robot description JSON.
    #[arg(long)]
    pub robot: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output root (overrides ASPACE_OUT and the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Show the plan without running it.
    #[arg(long)]
    pub dry_run: bool,
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Tasks to sweep.
    #[arg(long, value_delimiter = ',', default_value = "reach,push")]
    pub tasks: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint files.
    #[arg(long = "checkpoint")]
    pub checkpoints: Vec<PathBuf>,
    /// Space directory holding seed*/ runs, or a run root with --task and --space.
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub space: Option<String>,
    /// Keep the N seeds with the highest training reward.
    #[arg(long, default_value_t = 3)]
    pub best: usize,
    /// Goal-grid points per axis.
    #[arg(long, default_value_t = 5)]
    pub grid: usize,
    /// Plant for OTE replay: standard, identity or a JSON file.
    #[arg(long, default_value = "standard")]
    pub perturbation: String,
    /// Evaluate without the deployment filters.
    #[arg(long)]
    pub no_deployment: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Trajectory log (JSON lines).
    pub log: PathBuf,
    /// standard, identity or a JSON file.
    #[arg(long, default_value = "standard")]
    pub perturbation: String,
    /// Expected action space of the log.
    #[arg(long)]
    pub space: Option<String>,
    /// Directory for the per-step CSV and summary.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run root (defaults to the output root).
    pub dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Config file (or defaults) with the command-line overrides applied.
pub fn resolve_config(a: &RunArgs) -> CliResult<(RunConfig, PathBuf)> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(t) = &a.task {
        cfg.task = t.clone();
    }
    if !a.space.is_empty() {
        cfg.spaces = a.space.clone();
    }
    if let Some(s) = a.seed {
        cfg.seeds = vec![s];
    }
    if let Some(s) = &a.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    if let Some(n) = a.total_steps {
        cfg.ppo.total_steps = n;
    }
    if let Some(r) = &a.robot {
        cfg.robot = Some(r.clone());
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    let root = layout::output_root(a.out.as_deref(), &cfg.out_dir);
    Ok((cfg, root))
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Train(a) => {
            let (cfg, root) = resolve_config(&a.run)?;
            let s = cmd_train(&cfg, &root, a.run.dry_run, !a.run.quiet)?;
            println!(
                "{} runs scheduled, {} already complete, {} {}",
                s.scheduled,
                s.skipped,
                if a.run.dry_run { s.scheduled - s.skipped } else { s.trained },
                if a.run.dry_run { "to train" } else { "trained" },
            );
            Ok(())
        }
        Command::Benchmark(a) => {
            let (cfg, root) = resolve_config(&a.run)?;
            let (suite, s) = cmd_benchmark(&cfg, &a.tasks, &root, a.run.dry_run, !a.run.quiet)?;
            println!("{} cells, {} pending", s.cells, suite.pending());
            if !a.run.dry_run {
                println!("{} trained, {} evaluated\n\n{}", s.trained, s.evaluated, s.report.table);
            }
            Ok(())
        }
        Command::Eval(a) => eval(a),
        Command::ReplayOte(a) => {
            let p = PerturbationProfile::parse(&a.perturbation).resolve()?;
            if let Some(space) = &a.space {
                expand_spaces(std::slice::from_ref(space))?;
            }
            let out = a.out.clone().unwrap_or_else(|| default_replay_dir(&a.log));
            let r = cmd_replay_ote(&a.log, p, a.space.as_deref(), Some(&out))?;
            println!("episodes {}  OTE {:.6} rad  ({})", r.episodes, r.mean, out.display());
            Ok(())
        }
        Command::Report(a) => {
            let root = a
                .dir
                .unwrap_or_else(|| layout::output_root(None, &RunConfig::default().out_dir));
            let out = a.out.unwrap_or_else(|| root.join("report"));
            let r = cmd_report(&root, &out)?;
            print!("{}", r.table);
            Ok(())
        }
    }
}

fn default_replay_dir(log: &Path) -> PathBuf {
    let stem = log.file_stem().map_or("log".into(), |s| s.to_string_lossy().into_owned());
    log.parent().unwrap_or(Path::new(".")).join(format!("ote_{stem}"))
}

fn eval(a: EvalArgs) -> CliResult<()> {
    if let Some(space) = &a.space {
        expand_spaces(std::slice::from_ref(space))?;
    }
    let mut paths = a.checkpoints.clone();
    let mut out_default = None;
    if let Some(run) = &a.run {
        let space_dir = if layout::seed_dirs(run).is_empty() {
            match (&a.task, &a.space) {
                (Some(t), Some(s)) => layout::space_dir(run, t, s),
                _ => return usage(format!("{} has no seed directories; pass --task and --space", run.display())),
            }
        } else {
            run.clone()
        };
        paths.extend(run_checkpoints(&space_dir));
        out_default = Some(space_dir.join("eval"));
    }
    if paths.is_empty() {
        return usage("nothing to evaluate: pass --checkpoint or --run");
    }
    let out = a.out.clone().or(out_default).unwrap_or_else(|| {
        paths[0]
            .parent()
            .and_then(Path::parent)
            .unwrap_or(Path::new("."))
            .join("eval")
    });
    let protocol = Protocol {
        grid: a.grid,
        deployment: !a.no_deployment,
        perturbation: PerturbationProfile::parse(&a.perturbation).resolve()?,
    };
    let r = cmd_eval(&paths, a.space.as_deref(), a.best, &protocol, &out)?;
    print!("{}", aspace_core::metrics::format_table(std::slice::from_ref(&r.report)));
    Ok(())
}
