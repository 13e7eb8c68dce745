use aspace_core::action::ControllerConfig;
use aspace_core::task::{TaskConfig, TaskEnv, VecEnv};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::Adam;
use crate::buffer::RolloutBuffer;
use crate::checkpoint::{Checkpoint, CHECKPOINT_VERSION};
use crate::config::PpoConfig;
use crate::error::{PpoError, Result};
use crate::gae::normalize_advantages;
use crate::loss::ppo_loss;
use crate::normalizer::{RunningNorm, RunningScalar};
use crate::policy::PolicyNet;

/// Seed offset of the fixed evaluation episodes.
const EVAL_SEED_BASE: u64 = 0x5EED_0000;

/// One line of the training curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub env_steps: usize,
    /// Mean undiscounted reward of the episodes finished this iteration.
    pub episode_reward: Option<f64>,
    /// Fraction of those episodes ending within the success radius.
    pub success_rate: Option<f64>,
    pub episodes: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Deterministic evaluation, when one ran this iteration.
    pub eval: Option<EvalSummary>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub success_rate: f64,
    pub episode_reward: f64,
    pub distance: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub curve: Vec<CurvePoint>,
    /// Set when the run stopped at the success target.
    pub reached_target: bool,
}

/// Runs `episodes` deterministic episodes with fixed seeds and reports the
/// success rate at episode end.
pub fn evaluate(ck: &Checkpoint, template: &TaskEnv, episodes: usize) -> Result<EvalSummary> {
    let mut env = template.clone();
    let (mut wins, mut reward, mut dist) = (0usize, 0.0, 0.0);
    for k in 0..episodes {
        let mut obs = env.reset(EVAL_SEED_BASE + k as u64)?;
        loop {
            let out = env.step(&ck.act(&obs))?;
            reward += out.reward;
            obs = out.obs;
            if out.done {
                wins += out.success as usize;
                dist += out.distance;
                break;
            }
        }
    }
    let n = episodes.max(1) as f64;
    Ok(EvalSummary {
        episodes,
        success_rate: wins as f64 / n,
        episode_reward: reward / n,
        distance: dist / n,
    })
}

/// PPO state for one (task, space, seed) run.
pub struct Trainer {
    cfg: PpoConfig,
    task: TaskConfig,
    space: String,
    controller: ControllerConfig,
    seed: u64,
    template: TaskEnv,
    envs: VecEnv,
    net: PolicyNet,
    adam: Adam,
    obs_norm: RunningNorm,
    ret_norm: RunningScalar,
    running_returns: Vec<f64>,
    obs: Vec<DVector<f64>>,
    episode_reward: Vec<f64>,
    rng: ChaCha8Rng,
    buffer: RolloutBuffer,
    iteration: usize,
    env_steps: usize,
}

impl Trainer {
    pub fn new(task: TaskConfig, space: &str, controller: ControllerConfig, cfg: PpoConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let template = TaskEnv::new(task.clone(), space, controller.clone())?;
        let mut envs = VecEnv::new(&template, cfg.n_envs, seed)?;
        let obs: Vec<DVector<f64>> = envs.reset_all()?.iter().map(|o| o.to_vector()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = PolicyNet::new(template.obs_dim(), template.action_dim(), &cfg.hidden, cfg.init_log_std, &mut rng);
        let adam = Adam::new(net.param_count(), cfg.learning_rate);
        Ok(Self {
            obs_norm: RunningNorm::new(template.obs_dim()),
            ret_norm: RunningScalar::default(),
            running_returns: vec![0.0; cfg.n_envs],
            episode_reward: vec![0.0; cfg.n_envs],
            buffer: RolloutBuffer::new(cfg.n_envs, cfg.rollout_length),
            space: space.to_string(),
            task,
            controller,
            seed,
            template,
            envs,
            net,
            adam,
            obs,
            rng,
            cfg,
            iteration: 0,
            env_steps: 0,
        })
    }

    pub fn policy(&self) -> &PolicyNet {
        &self.net
    }

    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn template(&self) -> &TaskEnv {
        &self.template
    }

    pub fn checkpoint(&self, episode_reward: Option<f64>) -> Checkpoint {
        let mut obs_norm = self.obs_norm.clone();
        obs_norm.frozen = true;
        Checkpoint {
            version: CHECKPOINT_VERSION,
            space: self.space.clone(),
            task: self.task.clone(),
            controller: self.controller.clone(),
            ppo: self.cfg.clone(),
            seed: self.seed,
            iteration: self.iteration,
            env_steps: self.env_steps,
            episode_reward,
            hidden: self.cfg.hidden.clone(),
            policy: self.net.clone(),
            obs_norm,
        }
    }

    fn value_of(&self, raw: &DVector<f64>) -> f64 {
        self.net.value(&self.obs_norm.normalize(raw))
    }

    /// Collects one rollout and runs the minibatch epochs.
    pub fn iterate(&mut self) -> Result<CurvePoint> {
        let n = self.cfg.n_envs;
        let gamma = self.cfg.gamma;
        self.buffer.clear();
        let (mut finished, mut finished_reward, mut finished_success) = (0usize, 0.0, 0usize);
        for _ in 0..self.cfg.rollout_length {
            self.obs_norm.update(&self.obs);
            let normed: Vec<DVector<f64>> = self.obs.iter().map(|o| self.obs_norm.normalize(o)).collect();
            let x = DMatrix::from_columns(&normed);
            let means = self.net.mean_batch(&x);
            let values = self.net.value_batch(&x);
            let mut us = Vec::with_capacity(n);
            let mut actions = Vec::with_capacity(n);
            let mut logps = Vec::with_capacity(n);
            for e in 0..n {
                let (u, a, logp) = self.net.sample(means.column(e).as_slice(), &mut self.rng);
                us.push(u);
                actions.push(a);
                logps.push(logp);
            }
            let steps = self.envs.step(&actions)?;
            self.env_steps += n;
            let mut raw_rewards = Vec::with_capacity(n);
            for (e, s) in steps.iter().enumerate() {
                let r = s.outcome.reward;
                raw_rewards.push(r);
                self.episode_reward[e] += r;
                self.running_returns[e] = self.running_returns[e] * gamma + r;
            }
            if self.cfg.normalize_rewards {
                self.ret_norm.update(&self.running_returns);
            }
            let scale = if self.cfg.normalize_rewards {
                1.0 / self.ret_norm.std()
            } else {
                1.0
            };
            for (e, s) in steps.into_iter().enumerate() {
                let mut r = raw_rewards[e] * scale;
                let done = s.outcome.done;
                if done {
                    if s.outcome.truncated {
                        r += gamma * self.value_of(&s.outcome.obs.to_vector());
                    }
                    finished += 1;
                    finished_reward += self.episode_reward[e];
                    finished_success += s.outcome.success as usize;
                    self.episode_reward[e] = 0.0;
                    self.running_returns[e] = 0.0;
                }
                let next = match s.reset_obs {
                    Some(o) => o,
                    None => s.outcome.obs,
                };
                self.obs[e] = next.to_vector();
                let obs_e = normed[e].clone();
                let u = std::mem::replace(&mut us[e], DVector::zeros(0));
                self.buffer.push(obs_e, u, logps[e], r, values[e], done);
            }
        }
        for e in 0..n {
            self.buffer.last_values[e] = self.value_of(&self.obs[e]);
        }

        if self.cfg.anneal_lr {
            let frac = 1.0 - self.env_steps as f64 / self.cfg.total_steps.max(1) as f64;
            self.adam.lr = self.cfg.learning_rate * frac.max(0.0);
        }
        let (mut adv, returns) = self.buffer.advantages(gamma, self.cfg.gae_lambda)?;
        let total = self.buffer.len();
        let mb = self.cfg.minibatch_size.min(total);
        let mut order: Vec<usize> = (0..total).collect();
        let mut params = self.net.flatten();
        let mut stats = [0.0f64; 5];
        let mut updates = 0usize;
        for _ in 0..self.cfg.epochs {
            normalize_advantages(&mut adv)?;
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(mb) {
                let batch = self.buffer.batch(chunk, &adv, &returns);
                let out = ppo_loss(&batch, &self.net, &self.cfg)?;
                let mut g = out.grads.flatten();
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                if !norm.is_finite() {
                    return Err(PpoError::NonFinite);
                }
                if self.cfg.max_grad_norm > 0.0 && norm > self.cfg.max_grad_norm {
                    let s = self.cfg.max_grad_norm / norm;
                    g.iter_mut().for_each(|v| *v *= s);
                }
                self.adam.step(&mut params, &g);
                self.net.unflatten(&params);
                for (acc, v) in stats
                    .iter_mut()
                    .zip([out.policy_loss, out.value_loss, out.entropy, out.approx_kl, out.clip_fraction])
                {
                    *acc += v;
                }
                updates += 1;
            }
        }
        let u = updates.max(1) as f64;
        self.iteration += 1;
        Ok(CurvePoint {
            iteration: self.iteration,
            env_steps: self.env_steps,
            episode_reward: (finished > 0).then(|| finished_reward / finished as f64),
            success_rate: (finished > 0).then(|| finished_success as f64 / finished as f64),
            episodes: finished,
            policy_loss: stats[0] / u,
            value_loss: stats[1] / u,
            entropy: stats[2] / u,
            approx_kl: stats[3] / u,
            clip_fraction: stats[4] / u,
            eval: None,
        })
    }

    /// Runs until `total_steps` or the success target, calling `progress`
    /// after every iteration.
    pub fn run(mut self, mut progress: impl FnMut(&CurvePoint)) -> Result<TrainOutcome> {
        let mut curve = Vec::new();
        let mut best: Option<Checkpoint> = None;
        let mut last_er = None;
        let mut reached = false;
        while self.env_steps < self.cfg.total_steps {
            let context = format!(
                "training {} on {} (seed {}, iteration {})",
                self.space,
                self.task.task.name(),
                self.seed,
                self.iteration + 1
            );
            let mut point = self.iterate().map_err(|e| e.in_run(context.clone()))?;
            if let Some(er) = point.episode_reward {
                last_er = Some(er);
                if best.as_ref().map_or(true, |b| b.episode_reward.map_or(true, |be| er > be)) {
                    best = Some(self.checkpoint(last_er));
                }
            }
            let eval_due = self.cfg.eval_interval > 0
                && (self.iteration % self.cfg.eval_interval == 0 || self.env_steps >= self.cfg.total_steps);
            if eval_due {
                let summary = evaluate(&self.checkpoint(last_er), &self.template, self.cfg.eval_episodes)
                    .map_err(|e| e.in_run(context))?;
                reached = self.cfg.target_success.is_some_and(|t| summary.success_rate >= t);
                point.eval = Some(summary);
            }
            progress(&point);
            curve.push(point);
            if reached {
                break;
            }
        }
        let last = self.checkpoint(last_er);
        Ok(TrainOutcome {
            best: best.unwrap_or_else(|| last.clone()),
            last,
            curve,
            reached_target: reached,
        })
    }
}

/// Trains one policy from scratch.
pub fn train(
    task: TaskConfig,
    space: &str,
    controller: ControllerConfig,
    cfg: PpoConfig,
    seed: u64,
    progress: impl FnMut(&CurvePoint),
) -> Result<TrainOutcome> {
    Trainer::new(task, space, controller, cfg, seed)?.run(progress)
}
