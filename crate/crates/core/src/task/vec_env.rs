use nalgebra::DVector;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::env::{Observation, StepOutcome, TaskEnv};
use crate::error::{Error, Result};

/// Several independent environments stepped together. Episodes restart
/// automatically; each environment draws its episode seeds from its own
/// random stream.
pub struct VecEnv {
    envs: Vec<TaskEnv>,
    seeders: Vec<ChaCha8Rng>,
}

/// Result of stepping one member environment.
#[derive(Clone, Debug)]
pub struct VecStep {
    pub outcome: StepOutcome,
    /// First observation of the next episode when this one ended.
    pub reset_obs: Option<Observation>,
}

impl VecEnv {
    pub fn new(template: &TaskEnv, count: usize, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::Empty("input"));
        }
        let envs = vec![template.clone(); count];
        let seeders = (0..count)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64 + 1);
                rng
            })
            .collect();
        Ok(Self { envs, seeders })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn envs(&self) -> &[TaskEnv] {
        &self.envs
    }

    pub fn reset_all(&mut self) -> Result<Vec<Observation>> {
        self.envs
            .iter_mut()
            .zip(self.seeders.iter_mut())
            .map(|(env, seeder)| env.reset(seeder.next_u64()))
            .collect()
    }

    pub fn step(&mut self, actions: &[DVector<f64>]) -> Result<Vec<VecStep>> {
        crate::error::check_len("actions", self.envs.len(), actions.len())?;
        self.envs
            .par_iter_mut()
            .zip(self.seeders.par_iter_mut())
            .zip(actions.par_iter())
            .map(|((env, seeder), a)| {
                let outcome = env.step(a)?;
                let reset_obs = if outcome.done {
                    Some(env.reset(seeder.next_u64())?)
                } else {
                    None
                };
                Ok(VecStep { outcome, reset_obs })
            })
            .collect()
    }
}
