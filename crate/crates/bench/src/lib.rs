//! Fixtures shared by the benchmarks.

use ndarray::Array2;
use pmic_core::du_pcb::PairBatch;
use pmic_core::env::{EnvKind, Trajectory};
use pmic_core::maddpg::{ExperimentConfig, Learner, Mode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    Array2::from_shape_fn((rows, cols), |_| r.random_range(-1.0..1.0))
}

pub fn pair_batch(rows: usize, state_dim: usize, action_dim: usize, seed: u64) -> PairBatch {
    PairBatch {
        states: uniform(rows, state_dim, seed),
        actions: uniform(rows, action_dim, seed + 1),
    }
}

/// A learner that has collected `steps` environment steps and is ready to update.
pub fn warmed_learner(env: EnvKind, mode: Mode, steps: u64) -> (Learner, Box<dyn pmic_core::Environment>) {
    let mut config = ExperimentConfig::preset(env);
    config.mode = mode;
    config.alpha = 0.1;
    config.beta = 0.1;
    let mut e = env.build();
    let mut learner = Learner::new(config, e.as_ref()).expect("valid preset");
    while learner.global_step() < steps {
        learner.collect_episode(e.as_mut()).expect("rollout");
    }
    (learner, e)
}

/// Episodes with returns spread over the reward range.
pub fn bandit_trajectories(n: usize, seed: u64) -> Vec<Trajectory> {
    let mut env = EnvKind::TargetBandit.build();
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            pmic_core::env::rollout(env.as_mut(), i as u64, |_, _| {
                pmic_core::JointAction::new((0..4).map(|_| r.random_range(-1.0..1.0)).collect())
            })
            .expect("rollout")
        })
        .collect()
}
