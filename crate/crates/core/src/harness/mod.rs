//! Training runs, seed sweeps and their on-disk artifacts.

mod record;
mod summary;

pub use record::{EpisodeRow, EvalRow, MiRow, RunRecord};
pub use summary::{sweep, BehaviorFrequencies, CurvePoint, ModeSummary, SummaryTable};

use std::path::Path;
use std::time::Instant;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::env::{terminal_reward, CaptureStatus, Trajectory};
use crate::error::{Error, Result};
use crate::maddpg::{stream_rng, ExperimentConfig, Learner, Stream};

/// Coarse label of where both agents ended up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointBehavior {
    Optimal,
    SuboptimalDeer,
    SuboptimalCat,
    Uncoordinated,
}

impl JointBehavior {
    pub const ALL: [JointBehavior; 4] = [
        JointBehavior::Optimal,
        JointBehavior::SuboptimalDeer,
        JointBehavior::SuboptimalCat,
        JointBehavior::Uncoordinated,
    ];

    pub fn from_statuses(a: CaptureStatus, b: CaptureStatus) -> Self {
        use CaptureStatus::*;
        match (a, b) {
            (Tiger, Tiger) => JointBehavior::Optimal,
            (Deer, Deer) => JointBehavior::SuboptimalDeer,
            (Cat, Cat) => JointBehavior::SuboptimalCat,
            _ => JointBehavior::Uncoordinated,
        }
    }

    pub fn is_suboptimal(self) -> bool {
        matches!(self, JointBehavior::SuboptimalDeer | JointBehavior::SuboptimalCat)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JointBehavior::Optimal => "optimal",
            JointBehavior::SuboptimalDeer => "suboptimal_deer",
            JointBehavior::SuboptimalCat => "suboptimal_cat",
            JointBehavior::Uncoordinated => "uncoordinated",
        }
    }
}

/// Labels a finished trajectory from its terminal capture statuses.
pub fn classify_joint_behavior(traj: &Trajectory) -> Result<JointBehavior> {
    let (a, b) = traj
        .outcome()
        .ok_or_else(|| Error::InvalidConfig("trajectory has no recorded outcome".into()))?;
    Ok(JointBehavior::from_statuses(a, b))
}

/// Matrix payout of the recorded outcome.
pub fn outcome_reward(traj: &Trajectory) -> Option<f64> {
    traj.outcome().map(|(a, b)| terminal_reward(a, b))
}

/// Evaluation episodes pooled for final-window statistics.
pub const FINAL_EVAL_EPISODES: usize = 1000;

/// Runs the training loop to `max_steps` and writes artifacts under
/// `out_dir` when given. A run that hits a non-finite signal stops early,
/// is marked failed, and keeps everything logged so far.
pub fn run(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunRecord> {
    config.validate()?;
    let started = Instant::now();
    let mut env = config.env.build();
    let mut eval_env = config.env.build();
    let mut record = RunRecord::new(config);
    let mut eval_rng = stream_rng(config.seed, Stream::Eval);

    let outcome = (|| -> Result<()> {
        let mut learner = Learner::new(config.clone(), env.as_ref())?;
        while learner.global_step() < config.max_steps {
            let report = learner.train_episode(env.as_mut())?;
            for (step, out) in &report.estimator_log {
                record.mi.push(MiRow::new(*step, out));
            }
            let estimates = report.last_estimates;
            let stats = learner.pcb().stats();
            record.episodes.push(EpisodeRow {
                episode: learner.episodes(),
                step: learner.global_step(),
                episodic_return: report.trajectory.episodic_return(),
                r_low: stats.r_low,
                r_bar: stats.r_bar,
                positive_len: stats.positive_len,
                negative_len: stats.negative_len,
                mine_estimate: estimates.mine_estimate,
                club_estimate: estimates.club_estimate,
                mean_r_pmic: report.mean_r_pmic,
            });
            if learner.episodes() % config.eval_every == 0 {
                let mut row = EvalRow::empty(learner.episodes(), learner.global_step());
                for _ in 0..config.eval_episodes {
                    let traj = learner.evaluate(eval_env.as_mut(), eval_rng.next_u64())?;
                    row.add(&traj)?;
                }
                record.evals.push(row.finish());
            }
        }
        Ok(())
    })();

    if let Err(e) = outcome {
        match e {
            Error::NonFinite(msg) => record.failed = Some(msg),
            other => return Err(other),
        }
    }
    record.wall_clock_secs = started.elapsed().as_secs_f64();
    if let Some(dir) = out_dir {
        record.write_dir(&dir.join(record.dir_name()))?;
    }
    Ok(record)
}
