use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::*;

fn brute_force_gae(r: &[f64], v: &[f64], d: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            for l in 0..n - t {
                let k = t + l;
                if (t..k).any(|j| d[j]) {
                    break;
                }
                let next = if d[k] { 0.0 } else { v[k + 1] };
                let delta = r[k] + gamma * next - v[k];
                sum += (gamma * lambda).powi(l as i32) * delta;
            }
            sum
        })
        .collect()
}

#[test]
fn gae_single_step_is_td_error() {
    let (a, ret) = gae(&[1.5], &[0.4, 2.0], &[false], 0.9, 0.95).unwrap();
    assert!((a[0] - (1.5 + 0.9 * 2.0 - 0.4)).abs() < 1e-15);
    assert!((ret[0] - (a[0] + 0.4)).abs() < 1e-15);
}

#[test]
fn gae_monte_carlo_limit() {
    let r = [1.0, -2.0, 0.5, 3.0];
    let (a, _) = gae(&r, &[0.0; 5], &[false; 4], 1.0, 1.0).unwrap();
    for t in 0..4 {
        assert!((a[t] - r[t..].iter().sum::<f64>()).abs() < 1e-12);
    }
}

#[test]
fn gae_matches_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let r: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..11).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let d: Vec<bool> = (0..10).map(|_| rng.gen_bool(0.2)).collect();
        let (gamma, lambda) = (rng.gen_range(0.5..1.0), rng.gen_range(0.0..1.0));
        let (a, ret) = gae(&r, &v, &d, gamma, lambda).unwrap();
        let oracle = brute_force_gae(&r, &v, &d, gamma, lambda);
        for t in 0..10 {
            assert!((a[t] - oracle[t]).abs() < 1e-10);
            assert!((ret[t] - a[t] - v[t]).abs() < 1e-12);
        }
    }
}

#[test]
fn gae_length_mismatch() {
    assert!(matches!(gae(&[1.0, 2.0], &[0.0, 0.0], &[false, false], 0.9, 0.9), Err(PpoError::Length { .. })));
    assert!(matches!(gae(&[1.0], &[0.0, 0.0], &[], 0.9, 0.9), Err(PpoError::Length { .. })));
}

#[test]
fn buffer_advantages_follow_each_environment() {
    let mut buf = RolloutBuffer::new(2, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for t in 0..3 {
        for e in 0..2 {
            let r = rng.gen_range(-1.0..1.0);
            let v = rng.gen_range(-1.0..1.0);
            buf.push(DVector::zeros(2), DVector::zeros(1), 0.0, r, v, t == 1 && e == 0);
        }
    }
    buf.last_values = vec![0.3, -0.7];
    assert!(buf.is_full());
    let (adv, _) = buf.advantages(0.9, 0.8).unwrap();
    for e in 0..2 {
        let idx = [e, 2 + e, 4 + e];
        let r: Vec<f64> = idx.iter().map(|&i| buf.rewards[i]).collect();
        let d: Vec<bool> = idx.iter().map(|&i| buf.dones[i]).collect();
        let mut v: Vec<f64> = idx.iter().map(|&i| buf.values[i]).collect();
        v.push(buf.last_values[e]);
        let oracle = brute_force_gae(&r, &v, &d, 0.9, 0.8);
        for k in 0..3 {
            assert!((adv[idx[k]] - oracle[k]).abs() < 1e-12);
        }
    }
}

fn toy_batch(net: &PolicyNet, rng: &mut ChaCha8Rng, n: usize, ratios: &[f64]) -> Batch {
    let obs = DMatrix::from_fn(net.obs_dim(), n, |_, _| rng.gen_range(-1.5..1.5));
    let mean = net.mean_batch(&obs);
    let ls = net.effective_log_std();
    let mut u = DMatrix::zeros(net.action_dim(), n);
    let mut old_logp = Vec::new();
    for i in 0..n {
        let (ui, _, lp) = net.sample(mean.column(i).as_slice(), rng);
        u.set_column(i, &ui);
        let check = PolicyNet::log_prob(mean.column(i).as_slice(), ls.as_slice(), ui.as_slice());
        assert!((check - lp).abs() < 1e-12);
        old_logp.push(lp - ratios[i % ratios.len()].ln());
    }
    Batch {
        obs,
        u,
        old_logp,
        adv: (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        returns: (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect(),
    }
}

fn toy_net(rng: &mut ChaCha8Rng) -> PolicyNet {
    let mut net = PolicyNet::new(4, 2, &[5], -0.3, rng);
    // Larger output weights so the mean gradient is not tiny.
    let mut p = net.flatten();
    for v in p.iter_mut() {
        *v += rng.gen_range(-0.3..0.3);
    }
    net.unflatten(&p);
    net
}

#[test]
fn on_policy_ratio_gives_negative_mean_advantage() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = toy_net(&mut rng);
    let batch = toy_batch(&net, &mut rng, 16, &[1.0]);
    let out = ppo_loss(&batch, &net, &PpoConfig::default()).unwrap();
    let mean_adv = batch.adv.iter().sum::<f64>() / 16.0;
    assert!((out.policy_loss + mean_adv).abs() < 1e-12);
    assert!(out.approx_kl.abs() < 1e-12);
    assert_eq!(out.clip_fraction, 0.0);
}

#[test]
fn clipped_branch_has_zero_gradient() {
    let eps = 0.2;
    let (v, d) = surrogate(1.0 + 2.0 * eps, 1.5, eps);
    assert_eq!(v, (1.0 + eps) * 1.5);
    assert_eq!(d, 0.0);
    let (v, d) = surrogate(1.0 - 2.0 * eps, -1.0, eps);
    assert_eq!(v, -(1.0 - eps));
    assert_eq!(d, 0.0);
    let (_, d) = surrogate(1.0 - 2.0 * eps, 1.0, eps);
    assert_eq!(d, 1.0);
    // Every sample clipped with positive advantage: only value and entropy
    // terms move the actor.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = toy_net(&mut rng);
    let mut batch = toy_batch(&net, &mut rng, 8, &[1.0 + 2.0 * eps]);
    batch.adv.iter_mut().for_each(|a| *a = a.abs() + 0.1);
    let out = ppo_loss(&batch, &net, &PpoConfig::default()).unwrap();
    let actor = out.grads.actor.flatten_params();
    assert!(actor.iter().all(|&g| g == 0.0));
    assert_eq!(out.clip_fraction, 1.0);
}

trait FlatParams {
    fn flatten_params(&self) -> Vec<f64>;
}

impl FlatParams for Mlp {
    fn flatten_params(&self) -> Vec<f64> {
        let mut v = Vec::new();
        self.flatten_into(&mut v);
        v
    }
}

/// Largest relative gap between analytic and central-difference gradients.
fn gradient_gap(net: &PolicyNet, batch: &Batch, cfg: &PpoConfig) -> f64 {
    let analytic = ppo_loss(batch, net, cfg).unwrap().grads.flatten();
    let base = net.flatten();
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut probe = net.clone();
    for k in 0..base.len() {
        let mut p = base.clone();
        p[k] += h;
        probe.unflatten(&p);
        let up = ppo_loss(batch, &probe, cfg).unwrap().loss;
        p[k] -= 2.0 * h;
        probe.unflatten(&p);
        let down = ppo_loss(batch, &probe, cfg).unwrap().loss;
        let fd = (up - down) / (2.0 * h);
        let gap = (fd - analytic[k]).abs() / fd.abs().max(analytic[k].abs()).max(1e-6);
        worst = worst.max(gap);
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = PpoConfig {
        entropy_coef: 0.01,
        value_coef: 0.5,
        ..PpoConfig::default()
    };
    for _ in 0..3 {
        let net = toy_net(&mut rng);
        // Ratios kept away from the clip boundaries at 0.8 and 1.2.
        let batch = toy_batch(&net, &mut rng, 12, &[0.6, 0.9, 1.0, 1.05, 1.4]);
        let gap = gradient_gap(&net, &batch, &cfg);
        assert!(gap < 1e-4, "relative gradient gap {gap}");
    }
}

#[test]
fn clamped_log_std_receives_no_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut net = toy_net(&mut rng);
    net.log_std[0] = 3.5;
    net.log_std[1] = -7.0;
    assert_eq!(net.effective_log_std().as_slice(), &[LOG_STD_MAX, LOG_STD_MIN]);
    let batch = toy_batch(&net, &mut rng, 6, &[1.0]);
    let out = ppo_loss(&batch, &net, &PpoConfig::default()).unwrap();
    assert_eq!(out.grads.log_std.as_slice(), &[0.0, 0.0]);
}

#[test]
fn empty_and_non_finite_batches_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = toy_net(&mut rng);
    let empty = Batch {
        obs: DMatrix::zeros(4, 0),
        u: DMatrix::zeros(2, 0),
        old_logp: vec![],
        adv: vec![],
        returns: vec![],
    };
    assert!(matches!(ppo_loss(&empty, &net, &PpoConfig::default()), Err(PpoError::EmptyBatch)));
    let mut batch = toy_batch(&net, &mut rng, 4, &[1.0]);
    batch.returns[0] = f64::NAN;
    assert!(matches!(ppo_loss(&batch, &net, &PpoConfig::default()), Err(PpoError::NonFinite)));
}

#[test]
fn squash_correction_matches_direct_formula() {
    for &u in &[-3.0, -0.7, 0.0, 0.2, 1.9] {
        let direct = (1.0 - f64::tanh(u).powi(2)).ln();
        assert!((squash_log_det(&[u]) - direct).abs() < 1e-12);
    }
    assert!(squash_log_det(&[40.0, -40.0]).is_finite());
}

#[test]
fn squashed_density_integrates_to_one() {
    let (mean, log_std) = (0.4, -0.2);
    let n = 20_000;
    let da = 2.0 / n as f64;
    let total: f64 = (0..n)
        .map(|i| {
            let a = -1.0 + (i as f64 + 0.5) * da;
            let u = a.atanh();
            PolicyNet::log_prob(&[mean], &[log_std], &[u]).exp() * da
        })
        .sum();
    assert!((total - 1.0).abs() < 1e-3, "{total}");
}

#[test]
fn deterministic_action_is_squashed_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let net = toy_net(&mut rng);
    let obs = DVector::from_vec(vec![30.0, -20.0, 5.0, 1.0]);
    let a = net.act_deterministic(&obs);
    let mu = net.actor.forward_one(&obs);
    for i in 0..2 {
        assert_eq!(a[i], mu[i].tanh());
        assert!(a[i].abs() <= 1.0);
    }
}

#[test]
fn adam_minimizes_a_quadratic_and_lr_zero_is_inert() {
    let target = [1.0, -2.0, 0.5];
    let mut p = vec![0.0; 3];
    let mut adam = Adam::new(3, 0.05);
    for _ in 0..2000 {
        let g: Vec<f64> = (0..3).map(|i| 2.0 * (p[i] - target[i])).collect();
        adam.step(&mut p, &g);
    }
    for i in 0..3 {
        assert!((p[i] - target[i]).abs() < 1e-3);
    }
    let mut q = vec![0.3, 0.4];
    let mut frozen = Adam::new(2, 0.0);
    frozen.step(&mut q, &[5.0, -1.0]);
    assert_eq!(q, vec![0.3, 0.4]);
}

#[test]
fn frozen_normalizer_ignores_updates() {
    let mut n = RunningNorm::new(2);
    n.update(&[DVector::from_vec(vec![1.0, 2.0]), DVector::from_vec(vec![3.0, 6.0])]);
    assert_eq!(n.mean.as_slice(), &[2.0, 4.0]);
    assert_eq!(n.var.as_slice(), &[1.0, 4.0]);
    n.frozen = true;
    let before = n.clone();
    n.update(&[DVector::from_vec(vec![100.0, 100.0])]);
    assert_eq!(n, before);
    let z = n.normalize(&DVector::from_vec(vec![1e9, 4.0]));
    assert_eq!(z[0], n.clip);
    assert!(z[1].abs() < 1e-12);
}

#[test]
fn config_validation() {
    assert!(PpoConfig::default().validate().is_ok());
    let bad = [
        PpoConfig { gamma: 1.1, ..Default::default() },
        PpoConfig { gae_lambda: -0.1, ..Default::default() },
        PpoConfig { clip: 0.0, ..Default::default() },
        PpoConfig { n_envs: 0, ..Default::default() },
        PpoConfig { learning_rate: f64::NAN, ..Default::default() },
        PpoConfig { hidden: vec![64, 0], ..Default::default() },
        PpoConfig { target_success: Some(2.0), ..Default::default() },
    ];
    for cfg in bad {
        assert!(matches!(cfg.validate(), Err(PpoError::Config(_))), "{cfg:?}");
    }
    assert_eq!(PpoConfig::large_hidden(false, false), vec![512, 256, 128, 64]);
    assert_eq!(PpoConfig::large_hidden(true, true), vec![1024, 1024, 1024, 1024, 512, 256, 128]);
}

#[test]
fn config_json_defaults() {
    let cfg: PpoConfig = serde_json::from_str(r#"{"learning_rate": 0.001, "hidden": [32]}"#).unwrap();
    assert_eq!(cfg.learning_rate, 0.001);
    assert_eq!(cfg.hidden, vec![32]);
    assert_eq!(cfg.clip, PpoConfig::default().clip);
}

proptest! {
    #[test]
    fn sampled_log_prob_is_reproducible(seed in 0u64..10_000, log_std in -4.0f64..1.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = PolicyNet::new(3, 3, &[4], log_std, &mut rng);
        net.log_std[1] = log_std * 0.5;
        let mean: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (u, a, logp) = net.sample(&mean, &mut rng);
        let ls = net.effective_log_std();
        let again = PolicyNet::log_prob(&mean, ls.as_slice(), u.as_slice());
        prop_assert!((again - logp).abs() < 1e-10);
        prop_assert!(a.iter().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn normalized_advantages_are_standard(xs in proptest::collection::vec(-1e3f64..1e3, 2..300)) {
        let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-3);
        let mut a = xs.clone();
        normalize_advantages(&mut a).unwrap();
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() < 1e-6);
        prop_assert!((std - 1.0).abs() < 1e-6);
    }

    #[test]
    fn running_norm_merge_matches_full_batch(
        xs in proptest::collection::vec(-50.0f64..50.0, 4..120),
        split in 1usize..100,
    ) {
        let split = split.min(xs.len() - 1);
        let v: Vec<DVector<f64>> = xs.iter().map(|&x| DVector::from_vec(vec![x, 2.0 * x + 1.0])).collect();
        let mut parts = RunningNorm::new(2);
        parts.update(&v[..split]);
        parts.update(&v[split..]);
        let mut whole = RunningNorm::new(2);
        whole.update(&v);
        for i in 0..2 {
            prop_assert!((parts.mean[i] - whole.mean[i]).abs() < 1e-9);
            prop_assert!((parts.var[i] - whole.var[i]).abs() < 1e-7 * (1.0 + whole.var[i]));
        }
        let mut s_parts = RunningScalar::default();
        s_parts.update(&xs[..split]);
        s_parts.update(&xs[split..]);
        let mut s_whole = RunningScalar::default();
        s_whole.update(&xs);
        prop_assert!((s_parts.var - s_whole.var).abs() < 1e-7 * (1.0 + s_whole.var));
    }
}
