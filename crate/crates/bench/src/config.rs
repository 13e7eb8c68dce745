use std::path::{Path, PathBuf};

use aspace_core::action::{ActionSpaceKind, ControllerConfig, SpaceRegistry};
use aspace_core::task::{Perturbation, RewardConfig, TaskConfig};
use aspace_ppo::PpoConfig;
use serde::{Deserialize, Serialize};

use crate::error::{usage, CliResult};

/// Named or explicit plant perturbation for pseudo-real replay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerturbationProfile {
    Named(String),
    Custom(Perturbation),
}

impl Default for PerturbationProfile {
    fn default() -> Self {
        PerturbationProfile::Named("standard".into())
    }
}

impl PerturbationProfile {
    /// Accepts `standard`, `identity` or a path to a JSON perturbation.
    pub fn parse(s: &str) -> Self {
        PerturbationProfile::Named(s.to_string())
    }

    pub fn resolve(&self) -> CliResult<Perturbation> {
        match self {
            PerturbationProfile::Custom(p) => Ok(*p),
            PerturbationProfile::Named(n) => match n.as_str() {
                "standard" => Ok(Perturbation::STANDARD),
                "identity" | "none" => Ok(Perturbation::IDENTITY),
                path => {
                    let text = std::fs::read_to_string(path).or_else(|_| {
                        usage(format!("unknown perturbation profile '{path}' (use standard, identity or a JSON file)"))
                    })?;
                    serde_json::from_str(&text).or_else(|e| usage(format!("perturbation file {path}: {e}")))
                }
            },
        }
    }
}

/// Everything a training or benchmark run needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `reach`, `push`, `reach:panda7` or a task JSON file.
    pub task: String,
    /// Action-space names, or `["all"]`.
    pub spaces: Vec<String>,
    pub seeds: Vec<u64>,
    /// Robot description file replacing the task's robot.
    pub robot: Option<PathBuf>,
    /// Reward weights replacing the task's.
    pub reward: Option<RewardConfig>,
    pub ppo: PpoConfig,
    pub controller: ControllerConfig,
    /// Low-pass filter and rate limiter during evaluation.
    pub deployment: bool,
    pub perturbation: PerturbationProfile,
    pub out_dir: PathBuf,
    /// Cells trained in parallel.
    pub workers: usize,
    /// Goal-grid points per axis during evaluation.
    pub eval_grid: usize,
    /// Seeds kept per (task, space) during evaluation.
    pub best: usize,
    /// Logged episodes written next to each checkpoint.
    pub samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: "reach".into(),
            spaces: vec!["jv".into()],
            seeds: vec![0],
            robot: None,
            reward: None,
            ppo: PpoConfig::default(),
            controller: ControllerConfig::default(),
            deployment: true,
            perturbation: PerturbationProfile::default(),
            out_dir: PathBuf::from("out"),
            workers: 1,
            eval_grid: 5,
            best: 3,
            samples: 2,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return usage(format!("cannot read config {}: {e}", path.display())),
        };
        serde_json::from_str(&text).or_else(|e| usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Task config with the robot and reward overrides applied.
    pub fn task_config(&self) -> CliResult<TaskConfig> {
        let mut task = TaskConfig::load(&self.task).or_else(|e| usage(format!("task '{}': {e}", self.task)))?;
        if let Some(robot) = &self.robot {
            task.robot = robot.to_string_lossy().into_owned();
        }
        if let Some(reward) = self.reward {
            task.reward = reward;
        }
        task.validate().or_else(|e| usage(e.to_string()))?;
        Ok(task)
    }

    /// Space names with `all` expanded, in canonical order.
    pub fn space_names(&self) -> CliResult<Vec<String>> {
        expand_spaces(&self.spaces)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.seeds.is_empty() {
            return usage("at least one seed is required");
        }
        if self.spaces.is_empty() {
            return usage("at least one action space is required");
        }
        if let Some(robot) = &self.robot {
            if !robot.exists() {
                return usage(format!("robot file {} does not exist", robot.display()));
            }
        }
        self.space_names()?;
        self.task_config()?;
        self.ppo.validate().or_else(|e| usage(e.to_string()))?;
        self.perturbation.resolve()?;
        if self.workers == 0 {
            return usage("workers must be positive");
        }
        Ok(())
    }
}

/// Expands `all` and comma lists and checks every name against the
/// registry.
pub fn expand_spaces(items: &[String]) -> CliResult<Vec<String>> {
    let registry = SpaceRegistry::default();
    let mut out: Vec<String> = Vec::new();
    for item in items.iter().flat_map(|s| s.split(',')).map(str::trim).filter(|s| !s.is_empty()) {
        if item == "all" {
            for k in ActionSpaceKind::ALL {
                if !out.iter().any(|o| o == k.name()) {
                    out.push(k.name().to_string());
                }
            }
            continue;
        }
        if registry.kind(item).is_err() {
            let valid = ActionSpaceKind::ALL.map(|k| k.name()).join(", ");
            return usage(format!("unknown action space '{item}'; valid names: {valid}, all"));
        }
        if !out.iter().any(|o| o == item) {
            out.push(item.to_string());
        }
    }
    Ok(out)
}

/// Parses `3`, `0..2` (inclusive) or `0,2,5`.
pub fn parse_seeds(s: &str) -> CliResult<Vec<u64>> {
    let bad = || usage(format!("invalid seed list '{s}' (examples: 3, 0..4, 1,5,9)"));
    if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (Ok(a), Ok(b)) = (a.trim().parse::<u64>(), b.trim().parse::<u64>()) else {
            return bad();
        };
        if a > b {
            return bad();
        }
        return Ok((a..=b).collect());
    }
    let seeds: Result<Vec<u64>, _> = s.split(',').map(|p| p.trim().parse::<u64>()).collect();
    match seeds {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => bad(),
    }
}
