//! MADDPG with a centralized critic and mutual-information reward shaping.

mod config;
mod ensemble;
mod replay;

pub use config::{ExperimentConfig, Mode};
pub use ensemble::{ActorCriticEnsemble, UpdateLosses};
pub use replay::{ReplayBatch, ReplayBuffer, ReplayShape};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::du_mie::{self, ClubEstimator, MiReference, MineEstimator, TrainOutcome};
use crate::du_pcb::{DuPcb, PcbConfig, Placement};
use crate::env::{rollout, Environment, Trajectory};
use crate::error::{Error, Result};

/// Independent random streams derived from one seed, so that turning a
/// component on or off never shifts another component's draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 0,
    Explore = 1,
    Replay = 2,
    EstimatorInit = 3,
    Estimator = 4,
    Eval = 5,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Result of one learner update.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerUpdate {
    pub losses: UpdateLosses,
    /// Mean unclipped shaped reward over the batch.
    pub mean_r_pmic: f64,
}

/// What happened during one training episode.
#[derive(Debug, Clone)]
pub struct EpisodeReport {
    pub trajectory: Trajectory,
    pub placement: Placement,
    pub learner_updates: usize,
    /// `(global step, outcome)` for each estimator update that trained something.
    pub estimator_log: Vec<(u64, TrainOutcome)>,
    /// Mean over this episode's learner updates, if any ran.
    pub mean_r_pmic: Option<f64>,
    pub last_update: Option<LearnerUpdate>,
    /// Most recent estimator outcome with anything in it.
    pub last_estimates: TrainOutcome,
}

/// Owns every piece of training state for one run.
pub struct Learner {
    config: ExperimentConfig,
    ensemble: ActorCriticEnsemble,
    replay: ReplayBuffer,
    pcb: DuPcb,
    mine: Option<MineEstimator>,
    club: Option<ClubEstimator>,
    explore_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    estimator_rng: ChaCha8Rng,
    global_step: u64,
    episodes: u64,
    last_estimates: TrainOutcome,
}

impl Learner {
    pub fn new(config: ExperimentConfig, env: &dyn Environment) -> Result<Self> {
        config.validate()?;
        if env.num_agents() == 0 {
            return Err(Error::InvalidConfig("environment has no agents".into()));
        }
        let shape = ReplayShape {
            state_dim: env.state_dim(),
            obs_dim: env.obs_dim(),
            num_agents: env.num_agents(),
            action_dim: env.action_dim(),
        };
        let ensemble = ActorCriticEnsemble::new(
            shape,
            config.hidden,
            config.critic_lr,
            config.actor_lr,
            &mut stream_rng(config.seed, Stream::Init),
        )?;
        let mut est_init = stream_rng(config.seed, Stream::EstimatorInit);
        let mine = if config.mode.uses_mine() {
            Some(MineEstimator::new(
                shape.state_dim,
                shape.joint_action_dim(),
                config.mine_hidden,
                config.mine_embed,
                config.mine_lr,
                &mut est_init,
            )?)
        } else {
            None
        };
        let club = if config.mode.uses_club() {
            Some(ClubEstimator::new(
                shape.state_dim,
                shape.joint_action_dim(),
                config.club_hidden,
                config.club_lr,
                &mut est_init,
            )?)
        } else {
            None
        };
        Ok(Learner {
            replay: ReplayBuffer::new(shape, config.replay_capacity)?,
            pcb: DuPcb::new(PcbConfig {
                positive_capacity: config.positive_capacity,
                negative_capacity: config.negative_capacity,
                window: config.return_window,
            })?,
            explore_rng: stream_rng(config.seed, Stream::Explore),
            replay_rng: stream_rng(config.seed, Stream::Replay),
            estimator_rng: stream_rng(config.seed, Stream::Estimator),
            config,
            ensemble,
            mine,
            club,
            global_step: 0,
            episodes: 0,
            last_estimates: TrainOutcome::default(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn ensemble(&self) -> &ActorCriticEnsemble {
        &self.ensemble
    }

    pub fn ensemble_mut(&mut self) -> &mut ActorCriticEnsemble {
        &mut self.ensemble
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn pcb(&self) -> &DuPcb {
        &self.pcb
    }

    pub fn mine(&self) -> Option<&MineEstimator> {
        self.mine.as_ref()
    }

    pub fn club(&self) -> Option<&ClubEstimator> {
        self.club.as_ref()
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    /// Rolls one exploratory episode, appends it to replay and routes the
    /// finished trajectory through the dual buffer.
    pub fn collect_episode(&mut self, env: &mut dyn Environment) -> Result<(Trajectory, Placement)> {
        let noise = self.config.noise_scale(self.global_step);
        let seed = self.explore_rng.next_u64();
        let ensemble = &self.ensemble;
        let rng = &mut self.explore_rng;
        let mut failure = None;
        let traj = rollout(env, seed, |_, obs| match ensemble.act(obs, noise, rng) {
            Ok(a) => a,
            Err(e) => {
                failure.get_or_insert(e);
                crate::env::JointAction::new(vec![0.0; ensemble.shape().joint_action_dim()])
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        for t in traj.transitions() {
            self.replay.push(t)?;
        }
        let placement = self.pcb.insert(&traj);
        self.global_step += traj.len() as u64;
        self.episodes += 1;
        Ok((traj, placement))
    }

    /// One estimator update on the dual buffer.
    pub fn train_estimators(&mut self) -> Result<TrainOutcome> {
        let out = du_mie::train_step(
            self.mine.as_mut(),
            self.club.as_mut(),
            &self.pcb,
            self.config.mi_batch_size,
            &mut self.estimator_rng,
        )?;
        if out != TrainOutcome::default() {
            self.last_estimates = out;
        }
        Ok(out)
    }

    /// One learner update on a replay minibatch, shaping rewards with the
    /// current estimators.
    pub fn update(&mut self) -> Result<LearnerUpdate> {
        let batch = self.replay.sample(self.config.batch_size, &mut self.replay_rng)?;
        let (alpha, beta) = self.config.effective_weights();
        let mine = self.mine.as_ref().filter(|_| alpha != 0.0);
        let club = self.club.as_ref().filter(|_| beta != 0.0);
        let r_pmic: Vec<f64> = if mine.is_some() || club.is_some() {
            let reference = MiReference::draw(
                mine,
                club,
                &self.pcb,
                self.config.mi_reference_size,
                &mut self.estimator_rng,
            )?;
            du_mie::pmic_rewards(
                mine,
                club,
                batch.states.view(),
                batch.actions.view(),
                alpha,
                beta,
                &reference,
            )?
            .into_iter()
            .map(|s| s.r_pmic)
            .collect()
        } else {
            vec![0.0; batch.len()]
        };
        let losses = self.ensemble.update(
            &batch,
            &r_pmic,
            self.config.gamma,
            self.config.tau,
            self.config.pmic_clip,
        )?;
        Ok(LearnerUpdate {
            losses,
            mean_r_pmic: r_pmic.iter().sum::<f64>() / r_pmic.len() as f64,
        })
    }

    /// Collects one episode, then runs the estimator and learner updates
    /// that fall due on the steps it covered.
    pub fn train_episode(&mut self, env: &mut dyn Environment) -> Result<EpisodeReport> {
        let start = self.global_step;
        let (trajectory, placement) = self.collect_episode(env)?;
        let mut report = EpisodeReport {
            trajectory,
            placement,
            learner_updates: 0,
            estimator_log: Vec::new(),
            mean_r_pmic: None,
            last_update: None,
            last_estimates: TrainOutcome::default(),
        };
        let mut r_sum = 0.0;
        for step in start + 1..=self.global_step {
            if (self.mine.is_some() || self.club.is_some()) && step % self.config.mi_update_every == 0 {
                let out = self.train_estimators()?;
                if out != TrainOutcome::default() {
                    report.estimator_log.push((step, out));
                }
            }
            if step >= self.config.warmup_steps
                && step % self.config.update_every == 0
                && self.replay.len() >= self.config.batch_size
            {
                let u = self.update()?;
                r_sum += u.mean_r_pmic;
                report.learner_updates += 1;
                report.last_update = Some(u);
            }
        }
        if report.learner_updates > 0 {
            report.mean_r_pmic = Some(r_sum / report.learner_updates as f64);
        }
        report.last_estimates = self.last_estimates;
        Ok(report)
    }

    /// Noise-free rollout with the current actors.
    pub fn evaluate(&self, env: &mut dyn Environment, seed: u64) -> Result<Trajectory> {
        evaluate_policy(&self.ensemble, env, seed)
    }
}

/// Noise-free rollout of `ensemble`'s actors.
pub fn evaluate_policy(
    ensemble: &ActorCriticEnsemble,
    env: &mut dyn Environment,
    seed: u64,
) -> Result<Trajectory> {
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    let mut failure = None;
    let traj = rollout(env, seed, |_, obs| match ensemble.act(obs, 0.0, &mut unused) {
        Ok(a) => a,
        Err(e) => {
            failure.get_or_insert(e);
            crate::env::JointAction::new(vec![0.0; ensemble.shape().joint_action_dim()])
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(traj),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvKind;

    fn small(mode: Mode, seed: u64) -> ExperimentConfig {
        let mut c = ExperimentConfig::preset(EnvKind::TargetBandit);
        c.mode = mode;
        c.seed = seed;
        c.max_steps = 400;
        c.warmup_steps = 64;
        c.batch_size = 32;
        c.update_every = 4;
        c.mi_update_every = 4;
        c.mi_batch_size = 32;
        c.mi_reference_size = 16;
        c.hidden = 16;
        c.mine_hidden = 16;
        c.mine_embed = 8;
        c.club_hidden = 8;
        c
    }

    #[test]
    fn bandit_episode_stores_one_transition() {
        let mut env = EnvKind::TargetBandit.build();
        let mut l = Learner::new(small(Mode::Pmic, 1), env.as_ref()).unwrap();
        let mut shadow = DuPcb::new(PcbConfig::default()).unwrap();
        for i in 1..=50 {
            let (traj, placement) = l.collect_episode(env.as_mut()).unwrap();
            assert_eq!(traj.len(), 1);
            assert_eq!(l.replay().len(), i);
            let sum: f64 = traj.transitions().iter().map(|t| t.reward).sum();
            assert_eq!(traj.episodic_return(), sum);
            assert_eq!(shadow.insert(&traj), placement);
        }
        assert_eq!(l.global_step(), 50);
        assert_eq!(l.pcb().stats(), shadow.stats());
    }

    #[test]
    fn zero_weight_pmic_reduces_to_plain_maddpg() {
        let run = |mode: Mode| {
            let mut c = small(mode, 7);
            c.alpha = 0.0;
            c.beta = 0.0;
            let mut env = EnvKind::TargetBandit.build();
            let mut l = Learner::new(c, env.as_ref()).unwrap();
            let mut returns = Vec::new();
            let mut updates = 0;
            let mut estimator_updates = 0;
            while l.global_step() < 400 {
                let r = l.train_episode(env.as_mut()).unwrap();
                returns.push(r.trajectory.episodic_return());
                updates += r.learner_updates;
                estimator_updates += r.estimator_log.len();
            }
            (l.ensemble().flat_parameters(), returns, updates, estimator_updates)
        };
        let (p_pmic, r_pmic, u_pmic, e_pmic) = run(Mode::Pmic);
        let (p_base, r_base, u_base, e_base) = run(Mode::Maddpg);
        assert!(u_pmic > 50);
        assert_eq!(u_pmic, u_base);
        assert!(e_pmic > 0 && e_base == 0, "estimators still train in pmic mode");
        assert_eq!(r_pmic, r_base);
        assert!(p_pmic.iter().zip(&p_base).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn shaping_changes_the_learner() {
        let run = |alpha: f64| {
            let mut c = small(Mode::MaxOnly, 3);
            c.alpha = alpha;
            let mut env = EnvKind::TargetBandit.build();
            let mut l = Learner::new(c, env.as_ref()).unwrap();
            let mut shaped = Vec::new();
            while l.global_step() < 200 {
                if let Some(r) = l.train_episode(env.as_mut()).unwrap().mean_r_pmic {
                    shaped.push(r);
                }
            }
            (l.ensemble().flat_parameters(), shaped)
        };
        let (a, shaped) = run(0.5);
        let (b, none) = run(0.0);
        assert_ne!(a, b);
        assert!(shaped.iter().any(|r| *r != 0.0));
        assert!(none.iter().all(|r| *r == 0.0));
    }

    #[test]
    fn updates_wait_for_warm_up() {
        let mut env = EnvKind::TargetBandit.build();
        let mut l = Learner::new(small(Mode::Maddpg, 2), env.as_ref()).unwrap();
        let mut first = None;
        while l.global_step() < 100 {
            let r = l.train_episode(env.as_mut()).unwrap();
            if r.learner_updates > 0 && first.is_none() {
                first = Some(l.global_step());
            }
        }
        assert_eq!(first, Some(64));
    }

    #[test]
    fn estimator_presence_follows_mode() {
        let env = EnvKind::TargetBandit.build();
        for (mode, mine, club) in [
            (Mode::Pmic, true, true),
            (Mode::Maddpg, false, false),
            (Mode::MaxOnly, true, false),
            (Mode::MinOnly, false, true),
        ] {
            let l = Learner::new(small(mode, 0), env.as_ref()).unwrap();
            assert_eq!(l.mine().is_some(), mine);
            assert_eq!(l.club().is_some(), club);
        }
    }

    #[test]
    fn evaluation_is_noise_free_and_repeatable() {
        let mut env = EnvKind::ParticleRescue.build();
        let mut c = small(Mode::Maddpg, 5);
        c.env = EnvKind::ParticleRescue;
        let l = Learner::new(c, env.as_ref()).unwrap();
        let a = l.evaluate(env.as_mut(), 11).unwrap();
        let b = l.evaluate(env.as_mut(), 11).unwrap();
        assert_eq!(a.len(), 60);
        assert_eq!(a.transitions(), b.transitions());
    }
}
