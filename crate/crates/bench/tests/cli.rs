use std::path::{Path, PathBuf};
use std::process::Command;

use aspace_bench::benchmark::cmd_benchmark;
use aspace_bench::cli::{resolve_config, RunArgs};
use aspace_bench::eval::{cmd_eval, run_protocol, select_best, Protocol};
use aspace_bench::replay::cmd_replay_ote;
use aspace_bench::report::{band, cmd_report, render_table, Row};
use aspace_bench::train::{cmd_train, plan};
use aspace_bench::{parse_seeds, CliError, RunConfig};
use aspace_core::action::ControllerConfig;
use aspace_core::metrics::percentile;
use aspace_core::task::{Observation, Perturbation, TaskConfig, TaskEnv, TaskKind};
use aspace_ppo::{Checkpoint, PpoConfig};
use nalgebra::DVector;

fn tiny() -> RunConfig {
    RunConfig {
        ppo: PpoConfig {
            total_steps: 128,
            n_envs: 2,
            rollout_length: 64,
            minibatch_size: 64,
            epochs: 1,
            hidden: vec![8],
            eval_interval: 0,
            ..PpoConfig::default()
        },
        samples: 1,
        eval_grid: 2,
        best: 3,
        ..RunConfig::default()
    }
}

fn aspace(args: &[&str], out: &Path) -> (i32, String, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_aspace"))
        .args(args)
        .env("ASPACE_OUT", out)
        .output()
        .unwrap();
    (
        o.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&o.stdout).into_owned(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let p = dir.join("run.json");
    std::fs::write(&p, serde_json::to_vec_pretty(cfg).unwrap()).unwrap();
    p
}

#[test]
fn train_writes_cell_files_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &tiny());
    let out = dir.path().join("out");
    let cfg = cfg_path.to_str().unwrap();
    let (code, stdout, stderr) = aspace(&["train", "--config", cfg, "--task", "reach", "--space", "jv", "--seed", "0", "-q"], &out);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("1 runs scheduled"), "{stdout}");
    let cell = out.join("reach/jv/seed0");
    for f in ["best.json", "last.json", "curve.csv", "curve.json", "samples.jsonl", "run.json", "DONE"] {
        assert!(cell.join(f).is_file(), "missing {f}");
    }
    let csv = std::fs::read_to_string(cell.join("curve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let before = std::fs::read(cell.join("last.json")).unwrap();
    let (code, stdout, _) = aspace(&["train", "--config", cfg, "--space", "jv", "--seed", "0", "-q"], &out);
    assert_eq!(code, 0);
    assert!(stdout.contains("1 already complete, 0 trained"), "{stdout}");
    assert_eq!(std::fs::read(cell.join("last.json")).unwrap(), before);
}

#[test]
fn out_flag_beats_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &tiny());
    let flag = dir.path().join("flag");
    let (code, _, _) = aspace(
        &["train", "--config", cfg_path.to_str().unwrap(), "--space", "jp", "--seed", "3", "--out", flag.to_str().unwrap(), "-q"],
        &dir.path().join("env"),
    );
    assert_eq!(code, 0);
    assert!(flag.join("reach/jp/seed3/DONE").is_file());
    assert!(!dir.path().join("env").exists());
}

#[test]
fn all_spaces_times_three_seeds_is_39_cells() {
    let args = RunArgs {
        space: vec!["all".into()],
        seeds: Some("0..2".into()),
        ..RunArgs::default()
    };
    let (cfg, _) = resolve_config(&args).unwrap();
    let cells = plan(&cfg, Path::new("/nonexistent")).unwrap();
    assert_eq!(cells.len(), 39);
    let s = cmd_train(&cfg, Path::new("/nonexistent"), true, false).unwrap();
    assert_eq!((s.scheduled, s.trained), (39, 0));
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = aspace(&["train", "--space", "all", "--seeds", "0..2", "--dry-run"], dir.path());
    assert_eq!(code, 0);
    assert!(stdout.starts_with("39 runs scheduled"), "{stdout}");
}

#[test]
fn seed_lists() {
    assert_eq!(parse_seeds("0..2").unwrap(), vec![0, 1, 2]);
    assert_eq!(parse_seeds("4").unwrap(), vec![4]);
    assert_eq!(parse_seeds("1,5,9").unwrap(), vec![1, 5, 9]);
    assert!(parse_seeds("3..1").is_err());
    assert!(parse_seeds("x").is_err());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = aspace(&["train", "--space", "warp-drive", "--dry-run"], dir.path());
    assert_eq!(code, 2);
    for name in ["jt", "jp", "oi-jv", "mi-cp", "all"] {
        assert!(stderr.contains(name), "{stderr}");
    }
    let (code, _, _) = aspace(&["train", "--bogus-flag"], dir.path());
    assert_eq!(code, 2);
    let (code, _, _) = aspace(&["train", "--seeds", "9..1", "--dry-run"], dir.path());
    assert_eq!(code, 2);
    let missing = dir.path().join("nope.json");
    let (code, _, _) = aspace(&["train", "--config", missing.to_str().unwrap()], dir.path());
    assert_eq!(code, 2);
    let (code, _, _) = aspace(&["--help"], dir.path());
    assert_eq!(code, 0);
    let err = cmd_train(
        &RunConfig {
            seeds: vec![],
            ..tiny()
        },
        dir.path(),
        true,
        false,
    )
    .unwrap_err();
    assert!(matches!(err, CliError::Usage(_)));
}

fn zero_policy(_: &Observation) -> DVector<f64> {
    DVector::zeros(3)
}

#[test]
fn zero_action_policy_never_succeeds() {
    let task = TaskConfig::builtin(TaskKind::Reach, "planar3").unwrap();
    let ctrl = ControllerConfig {
        deployment: true,
        ..ControllerConfig::default()
    };
    let env = TaskEnv::new(task, "jv", ctrl).unwrap();
    let out = run_protocol(&env, &[&zero_policy], &Protocol::default()).unwrap();
    assert_eq!(out.report.sr, 0.0);
    assert_eq!(out.report.episodes, 25);
    assert!(out.report.acc_cm.mean.is_finite() && out.report.acc_cm.mean > 2.0);
    assert!(out.ote.iter().all(|o| o.is_finite()));
}

fn trained_checkpoints(root: &Path, seeds: &str, space: &str) -> Vec<PathBuf> {
    let args = RunArgs {
        space: vec![space.into()],
        seeds: Some(seeds.into()),
        out: Some(root.to_path_buf()),
        quiet: true,
        ..RunArgs::default()
    };
    let (mut cfg, root) = resolve_config(&args).unwrap();
    cfg.ppo = tiny().ppo;
    cfg.samples = 0;
    cmd_train(&cfg, &root, false, false).unwrap();
    plan(&cfg, &root).unwrap().iter().map(|c| c.dir.join("best.json")).collect()
}

#[test]
fn eval_keeps_the_best_seeds_by_reward() {
    let dir = tempfile::tempdir().unwrap();
    let paths = trained_checkpoints(dir.path(), "0..4", "oi-jp");
    let rewards = [3.0, 9.0, -1.0, 7.0, 8.0];
    for (p, r) in paths.iter().zip(rewards) {
        let mut ck = Checkpoint::load(p).unwrap();
        ck.episode_reward = Some(r);
        ck.save(p).unwrap();
    }
    let cks: Vec<_> = paths.iter().map(|p| (p.clone(), Checkpoint::load(p).unwrap())).collect();
    let chosen: Vec<f64> = select_best(cks, 3).iter().map(|c| c.1.episode_reward.unwrap()).collect();
    assert_eq!(chosen, vec![9.0, 8.0, 7.0]);

    let out_dir = dir.path().join("eval");
    let protocol = Protocol {
        grid: 2,
        ..Protocol::default()
    };
    let out = cmd_eval(&paths, Some("oi-jp"), 3, &protocol, &out_dir).unwrap();
    assert_eq!(out.report.episodes, 3 * 4);
    let selected: Vec<String> = serde_json::from_slice(&std::fs::read(out_dir.join("selected.json")).unwrap()).unwrap();
    assert_eq!(selected.len(), 3);
    assert!(selected[0].contains("seed1") && selected[1].contains("seed4") && selected[2].contains("seed3"));
    for f in ["report.json", "report.txt", "trajectories.jsonl", "ote.csv"] {
        assert!(out_dir.join(f).is_file());
    }
    assert!(cmd_eval(&paths, Some("jv"), 3, &protocol, &out_dir).is_err());
}

#[test]
fn report_columns() {
    let rows = [Row {
        task: "reach".into(),
        space: "jv".into(),
        report: None,
    }];
    let table = render_table(&rows);
    let header: Vec<&str> = table.lines().next().unwrap().split("  ").map(str::trim).filter(|s| !s.is_empty()).collect();
    assert_eq!(header, vec!["task", "space", "SR %", "ACC cm", "ECV %", "NTE", "OTE rad", "ER"]);
    assert!(table.lines().nth(2).unwrap().contains("JV"));
    assert_eq!(table.lines().nth(2).unwrap().matches(" - ").count() + 1, 6);
}

#[test]
fn replay_identity_is_zero_and_golden_matches() {
    let log = data("sample_reach_jv.jsonl");
    let r = cmd_replay_ote(&log, Perturbation::IDENTITY, Some("jv"), None).unwrap();
    assert_eq!(r.mean, 0.0);
    let golden: serde_json::Value = serde_json::from_slice(&std::fs::read(data("sample_reach_jv.golden.json")).unwrap()).unwrap();
    let expected = golden["ote"].as_f64().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let r = cmd_replay_ote(&log, Perturbation::STANDARD, None, Some(dir.path())).unwrap();
    assert!((r.mean - expected).abs() <= 1e-9 * expected, "{} vs {expected}", r.mean);
    assert!(r.mean > 0.0);
    let csv = std::fs::read_to_string(dir.path().join("ote_steps.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 200);
    assert!(dir.path().join("ote_summary.json").is_file());
}

#[test]
fn replay_command_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let (code, stdout, stderr) = aspace(
        &["replay-ote", data("sample_reach_jv.jsonl").to_str().unwrap(), "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("OTE 0.005"), "{stdout}");
    let missing = dir.path().join("missing.jsonl");
    let (code, _, _) = aspace(&["replay-ote", missing.to_str().unwrap()], dir.path());
    assert_eq!(code, 1);

    let text = std::fs::read_to_string(data("sample_reach_jv.jsonl")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[6] = "{\"step\": garbage";
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, lines.join("\n")).unwrap();
    let (code, _, stderr) = aspace(&["replay-ote", bad.to_str().unwrap(), "--perturbation", "identity"], dir.path());
    assert_eq!(code, 1);
    assert!(stderr.contains("line 7"), "{stderr}");
    let (code, _, _) = aspace(&["replay-ote", bad.to_str().unwrap(), "--perturbation", "sideways"], dir.path());
    assert_eq!(code, 2);
}

#[test]
fn band_matches_direct_percentiles() {
    let curves: Vec<Vec<(f64, f64)>> = (0..7)
        .map(|s| (0..20).map(|i| (i as f64 * 100.0, ((s * 31 + i * 7) % 13) as f64 - 0.5 * s as f64)).collect())
        .collect();
    let b = band(&curves);
    assert_eq!(b.len(), 20);
    for (i, p) in b.iter().enumerate() {
        let ys: Vec<f64> = curves.iter().map(|c| c[i].1).collect();
        assert_eq!(p.x, i as f64 * 100.0);
        assert!((p.p5 - percentile(&ys, 5.0).unwrap()).abs() < 1e-12);
        assert!((p.p95 - percentile(&ys, 95.0).unwrap()).abs() < 1e-12);
        assert!((p.median - percentile(&ys, 50.0).unwrap()).abs() < 1e-12);
        assert!(p.p5 <= p.median && p.median <= p.p95);
    }
    let ragged = band(&[vec![(0.0, 1.0), (1.0, 2.0)], vec![(0.0, 3.0)]]);
    assert_eq!(ragged.len(), 2);
    assert_eq!(ragged[1].median, 2.0);
}

#[test]
fn benchmark_report_and_missing_cells() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("runs");
    let mut reach = RunConfig {
        spaces: vec!["jv".into(), "jt".into()],
        ..tiny()
    };
    // Long enough for whole episodes, so curves have points.
    reach.ppo.total_steps = 512;
    let (suite, s) = cmd_benchmark(&reach, &["reach".into()], &root, false, false).unwrap();
    assert_eq!((s.cells, s.trained, s.evaluated), (2, 2, 2));
    assert_eq!(suite.pending(), 0);
    let push = RunConfig {
        spaces: vec!["jv".into()],
        ..tiny()
    };
    cmd_benchmark(&push, &["push".into()], &root, false, false).unwrap();

    let report = cmd_report(&root, &root.join("report")).unwrap();
    let labels: Vec<(String, String, bool)> =
        report.rows.iter().map(|r| (r.task.clone(), r.space.clone(), r.report.is_some())).collect();
    assert_eq!(
        labels,
        vec![
            ("reach".into(), "jv".into(), true),
            ("reach".into(), "jt".into(), true),
            ("push".into(), "jv".into(), true),
            ("push".into(), "jt".into(), false),
        ]
    );
    let jt_push = report.table.lines().find(|l| l.starts_with("push") && l.contains("JT")).unwrap();
    assert!(jt_push.split_whitespace().skip(2).all(|c| c == "-"), "{jt_push}");
    for f in ["table.txt", "table.json", "curve_reach_jv.svg", "group_reach_joint_vs_cartesian.svg"] {
        let p = root.join("report").join(f);
        assert!(p.is_file(), "missing {f}");
    }
    let svg = std::fs::read_to_string(root.join("report/curve_reach_jv.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline") && svg.contains("<polygon"));

    // Rerunning a finished suite trains and evaluates nothing.
    let table = std::fs::read_to_string(root.join("report/table.txt")).unwrap();
    let (_, again) = cmd_benchmark(&reach, &["reach".into()], &root, false, false).unwrap();
    assert_eq!((again.trained, again.evaluated), (0, 0));
    cmd_benchmark(&push, &["push".into()], &root, false, false).unwrap();
    assert_eq!(std::fs::read_to_string(root.join("report/table.txt")).unwrap(), table);
}

#[test]
fn one_cell_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = RunConfig {
        spaces: vec!["cv".into()],
        ..tiny()
    };
    cmd_benchmark(&cfg, &["reach".into()], root, false, false).unwrap();
    let (code, stdout, stderr) = aspace(&["report", root.to_str().unwrap()], root);
    assert_eq!(code, 0, "{stderr}");
    assert_eq!(stdout.lines().count(), 3, "{stdout}");
    assert!(stdout.lines().nth(2).unwrap().starts_with("reach  CV"));
}
