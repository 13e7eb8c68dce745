use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::action::{ActionSpaceKind, ControllerConfig};
use crate::task::{Perturbation, ScriptedPolicy, TaskConfig, TaskEnv, TaskKind};

fn flags(v: bool) -> ViolationFlags {
    ViolationFlags {
        velocity: v,
        acceleration: false,
        jerk: false,
    }
}

fn record_scripted(space: &str, task: TaskKind, seed: u64, noise: f64) -> Trajectory {
    let cfg = TaskConfig::builtin(task, "planar3").unwrap();
    let mut env = TaskEnv::new(cfg, space, ControllerConfig::default()).unwrap();
    env.reset(seed).unwrap();
    let policy = ScriptedPolicy::new(&env).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Trajectory::record(&mut env, seed, |e| policy.noisy_action(e, noise, &mut rng)).unwrap()
}

#[test]
fn ecv_examples() {
    assert_eq!(ecv_from_flags(&[flags(false); 10]).unwrap(), 0.0);
    assert_eq!(ecv_from_flags(&[flags(true); 10]).unwrap(), 1.0);
    let mut f = [flags(false); 10];
    for i in [1, 4, 9] {
        f[i] = flags(true);
    }
    assert!((ecv_from_flags(&f).unwrap() - 0.3).abs() < 1e-15);
    assert!(ecv_from_flags(&[]).is_err());
}

#[test]
fn nte_examples() {
    let lo = [-1.0];
    let hi = [1.0];
    let v = vec![vec![0.2], vec![0.5], vec![-0.3]];
    assert_eq!(nte_series(&v, &v, &lo, &hi).unwrap(), 0.0);
    assert_eq!(nte_series(&[vec![1.0]], &[vec![-1.0]], &lo, &hi).unwrap(), 1.0);
    let vd = [0.1, 0.4, -0.2, 0.0, 0.9].map(|x| vec![x]);
    let vn = [0.0, 0.5, -0.1, 0.3, 0.7].map(|x| vec![x]);
    let hand = (0.1 + 0.1 + 0.1 + 0.3 + 0.2) / 2.0 / 5.0;
    assert!((nte_series(&vd, &vn, &lo, &hi).unwrap() - hand).abs() < 1e-12);
    assert!(matches!(
        nte_series(&vd, &vn, &[0.0], &[0.0]),
        Err(crate::Error::DegenerateLimits(0))
    ));
}

#[test]
fn percentile_interpolates() {
    let v = [4.0, 1.0, 3.0, 2.0];
    assert!((percentile(&v, 5.0).unwrap() - 1.15).abs() < 1e-12);
    assert!((percentile(&v, 95.0).unwrap() - 3.85).abs() < 1e-12);
    assert_eq!(percentile(&v, 50.0).unwrap(), 2.5);
    assert_eq!(percentile(&[7.0], 95.0).unwrap(), 7.0);
}

fn episode(distance: f64, eps: f64) -> EpisodeMetrics {
    EpisodeMetrics {
        reward: 1.0,
        success: distance < eps,
        distance,
        violating_steps: 0,
        control_steps: 10,
        nte: None,
        ote: None,
    }
}

#[test]
fn summarize_examples() {
    let r = summarize("jv", "reach", &[episode(0.0, 0.02)]).unwrap();
    assert_eq!(r.acc_cm.mean, 0.0);
    assert_eq!(r.sr, 100.0);
    let r = summarize("jv", "reach", &[episode(0.01, 0.02), episode(0.03, 0.02)]).unwrap();
    assert!((r.acc_cm.mean - 2.0).abs() < 1e-12);
    assert_eq!(r.sr, 50.0);
    assert!(summarize("jv", "reach", &[]).is_err());
}

#[test]
fn summarize_is_a_fold() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let make = |rng: &mut ChaCha8Rng| EpisodeMetrics {
        reward: rng.gen_range(-5.0..50.0),
        success: rng.gen_bool(0.6),
        distance: rng.gen_range(0.0..0.1),
        violating_steps: rng.gen_range(0..50),
        control_steps: 200,
        nte: Some(rng.gen_range(0.0..0.2)),
        ote: None,
    };
    let a: Vec<_> = (0..7).map(|_| make(&mut rng)).collect();
    let b: Vec<_> = (0..13).map(|_| make(&mut rng)).collect();
    let all: Vec<_> = a.iter().chain(b.iter()).cloned().collect();
    let (ra, rb, rall) = (
        summarize("x", "y", &a).unwrap(),
        summarize("x", "y", &b).unwrap(),
        summarize("x", "y", &all).unwrap(),
    );
    let w = |fa: f64, fb: f64| (7.0 * fa + 13.0 * fb) / 20.0;
    assert!((rall.sr - w(ra.sr, rb.sr)).abs() < 1e-10);
    assert!((rall.acc_cm.mean - w(ra.acc_cm.mean, rb.acc_cm.mean)).abs() < 1e-10);
    assert!((rall.er.mean - w(ra.er.mean, rb.er.mean)).abs() < 1e-10);
    assert!((rall.ecv - w(ra.ecv, rb.ecv)).abs() < 1e-10);
    assert!((rall.nte.unwrap().mean - w(ra.nte.unwrap().mean, rb.nte.unwrap().mean)).abs() < 1e-10);
}

#[test]
fn trajectory_metrics_match_brute_force() {
    let traj = record_scripted("mi-jv", TaskKind::Reach, 3, 0.2);
    let bad = traj.records.iter().filter(|r| r.flags.any()).count() as f64;
    assert_eq!(ecv(std::slice::from_ref(&traj)).unwrap(), bad / traj.records.len() as f64);
    // NTE by direct indexing: policy step t starts at record 2t.
    let (lo, hi) = (&traj.header.v_lower, &traj.header.v_upper);
    let steps = traj.policy_steps();
    let mut sum = 0.0;
    for t in 0..steps {
        let vd = &traj.records[2 * t].v_d;
        let v = if t + 1 < steps { &traj.records[2 * t + 2].v } else { &traj.end.v };
        let mut s = 0.0;
        for i in 0..vd.len() {
            s += (vd[i] - v[i]).abs() / (hi[i] - lo[i]);
        }
        sum += s / vd.len() as f64;
    }
    assert!((nte(&traj).unwrap() - sum / steps as f64).abs() < 1e-12);
    let m = EpisodeMetrics::from_trajectory(&traj).unwrap();
    assert_eq!(m.reward, traj.records.iter().filter_map(|r| r.reward).sum::<f64>());
}

#[test]
fn jsonl_round_trip_is_exact() {
    for (space, task) in [("oi-cp", TaskKind::Reach), ("jt", TaskKind::Push)] {
        let traj = record_scripted(space, task, 1, 0.1);
        let text = traj.to_jsonl();
        assert_eq!(text.lines().count(), traj.records.len() + 2);
        let back = Trajectory::from_jsonl(&text).unwrap();
        assert_eq!(back, vec![traj]);
    }
}

#[test]
fn corrupt_logs_rejected() {
    let traj = record_scripted("jv", TaskKind::Reach, 0, 0.0);
    let text = traj.to_jsonl();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[3] = "{not json";
    let err = Trajectory::from_jsonl(&lines.join("\n")).unwrap_err();
    assert!(matches!(err, crate::Error::CorruptLog { line: 4, .. }), "{err}");
    let truncated: Vec<&str> = text.lines().take(10).collect();
    assert!(Trajectory::from_jsonl(&truncated.join("\n")).is_err());
    let skipped: Vec<&str> = text.lines().enumerate().filter(|(i, _)| *i != 5).map(|(_, l)| l).collect();
    assert!(Trajectory::from_jsonl(&skipped.join("\n")).is_err());
    let bumped = text.replacen("\"schema_version\":1", "\"schema_version\":99", 1);
    assert!(matches!(Trajectory::from_jsonl(&bumped), Err(crate::Error::SchemaVersion(99))));
}

#[test]
fn self_replay_is_exact_for_every_space() {
    for kind in ActionSpaceKind::ALL {
        for task in [TaskKind::Reach, TaskKind::Push] {
            let traj = record_scripted(kind.name(), task, 11, 0.2);
            let r = ote_replay(&traj, traj.header.perturbation, Some(kind.name())).unwrap();
            assert_eq!(r.mean, 0.0, "{kind} {task}");
            assert_eq!(r.per_step.len(), traj.records.len());
        }
    }
}

#[test]
fn replay_after_round_trip_is_exact() {
    let traj = record_scripted("cv", TaskKind::Push, 2, 0.2);
    let back = Trajectory::from_jsonl(&traj.to_jsonl()).unwrap().remove(0);
    assert_eq!(ote_replay(&back, Perturbation::IDENTITY, None).unwrap().mean, 0.0);
}

#[test]
fn replay_space_mismatch() {
    let traj = record_scripted("jv", TaskKind::Reach, 0, 0.0);
    assert!(matches!(
        ote_replay(&traj, Perturbation::IDENTITY, Some("jp")),
        Err(crate::Error::SpaceMismatch { .. })
    ));
}

#[test]
fn heavier_links_grow_torque_replay_error() {
    let traj = record_scripted("jt", TaskKind::Reach, 4, 0.1);
    let heavy = Perturbation {
        mass_scale: 1.2,
        ..Perturbation::IDENTITY
    };
    let r = ote_replay(&traj, heavy, None).unwrap();
    assert!(r.mean > 0.0);
    let prefix_mean = |h: usize| r.per_step[..h].iter().sum::<f64>() / h as f64;
    let n = r.per_step.len();
    let marks: Vec<f64> = [n / 8, n / 4, n / 2, n].iter().map(|&h| prefix_mean(h)).collect();
    assert!(marks.windows(2).all(|w| w[1] >= w[0]), "{marks:?}");
}

#[test]
fn table_has_one_row_per_report() {
    let trajs: Vec<_> = (0..3).map(|s| record_scripted("jv", TaskKind::Reach, s, 0.1)).collect();
    let rep = summarize_trajectories(&trajs, Some(&[0.1, 0.2, 0.3])).unwrap();
    assert_eq!(rep.episodes, 3);
    assert!((rep.ote.unwrap().mean - 0.2).abs() < 1e-12);
    let table = format_table(&[rep.clone(), rep]);
    assert_eq!(table.lines().count(), 4);
    assert!(table.lines().next().unwrap().starts_with("space"));
}

proptest! {
    #[test]
    fn ecv_bounded_and_order_invariant(bits in proptest::collection::vec(any::<bool>(), 1..200), seed in 0u64..100) {
        let f: Vec<_> = bits.iter().map(|&b| flags(b)).collect();
        let e = ecv_from_flags(&f).unwrap();
        prop_assert!((0.0..=1.0).contains(&e));
        let mut shuffled = f.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.gen_range(0..=i));
        }
        prop_assert_eq!(ecv_from_flags(&shuffled).unwrap(), e);
    }

    #[test]
    fn nte_invariant_to_affine_reparameterization(
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
        seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lo = [-1.0, 0.0];
        let hi = [1.0, 3.0];
        let gen = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..6).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(0.0..3.0)]).collect()
        };
        let vd = gen(&mut rng);
        let vn = gen(&mut rng);
        let base = nte_series(&vd, &vn, &lo, &hi).unwrap();
        let map = |v: &Vec<Vec<f64>>| -> Vec<Vec<f64>> { v.iter().map(|x| x.iter().map(|y| y * scale + shift).collect()).collect() };
        let lo2 = lo.map(|y| y * scale + shift);
        let hi2 = hi.map(|y| y * scale + shift);
        let moved = nte_series(&map(&vd), &map(&vn), &lo2, &hi2).unwrap();
        prop_assert!((moved - base).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&base));
    }
}
