use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{classify_joint_behavior, JointBehavior};
use crate::du_mie::TrainOutcome;
use crate::env::{EnvKind, Trajectory};
use crate::error::Result;
use crate::maddpg::{ExperimentConfig, Mode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: u64,
    /// Global step after the episode.
    pub step: u64,
    pub episodic_return: f64,
    pub r_low: f64,
    pub r_bar: f64,
    pub positive_len: usize,
    pub negative_len: usize,
    pub mine_estimate: Option<f64>,
    pub club_estimate: Option<f64>,
    pub mean_r_pmic: Option<f64>,
}

/// Noise-free evaluation after a training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub episode: u64,
    pub step: u64,
    pub returns: Vec<f64>,
    pub behaviors: Vec<JointBehavior>,
    pub mean_return: f64,
}

impl EvalRow {
    pub(crate) fn empty(episode: u64, step: u64) -> Self {
        EvalRow {
            episode,
            step,
            returns: Vec::new(),
            behaviors: Vec::new(),
            mean_return: 0.0,
        }
    }

    pub(crate) fn add(&mut self, traj: &Trajectory) -> Result<()> {
        self.returns.push(traj.episodic_return());
        self.behaviors.push(classify_joint_behavior(traj)?);
        Ok(())
    }

    pub(crate) fn finish(mut self) -> Self {
        if !self.returns.is_empty() {
            self.mean_return = self.returns.iter().sum::<f64>() / self.returns.len() as f64;
        }
        self
    }

    pub fn count(&self, b: JointBehavior) -> usize {
        self.behaviors.iter().filter(|x| **x == b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiRow {
    pub step: u64,
    pub loss_mine: Option<f64>,
    pub loss_club: Option<f64>,
    pub mine_estimate: Option<f64>,
    pub club_estimate: Option<f64>,
}

impl MiRow {
    pub fn new(step: u64, out: &TrainOutcome) -> Self {
        MiRow {
            step,
            loss_mine: out.loss_mine,
            loss_club: out.loss_club,
            mine_estimate: out.mine_estimate,
            club_estimate: out.club_estimate,
        }
    }
}

/// Everything logged by one `(config, seed)` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub env: EnvKind,
    pub mode: Mode,
    pub seed: u64,
    pub episodes: Vec<EpisodeRow>,
    pub evals: Vec<EvalRow>,
    pub mi: Vec<MiRow>,
    pub wall_clock_secs: f64,
    /// Diagnostic of the non-finite signal that stopped the run.
    pub failed: Option<String>,
}

pub const EPISODE_HEADER: &str = "episode,step,episodic_return,r_low,r_bar,positive_len,negative_len,mine_estimate,club_estimate,mean_r_pmic";
pub const EVAL_HEADER: &str = "episode,step,mean_return,optimal,suboptimal_deer,suboptimal_cat,uncoordinated";
pub const MI_HEADER: &str = "step,loss_mine,loss_club,mine_estimate,club_estimate";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunRecord {
    pub fn new(config: &ExperimentConfig) -> Self {
        RunRecord {
            config_hash: config.hash(),
            env: config.env,
            mode: config.mode,
            seed: config.seed,
            episodes: Vec::new(),
            evals: Vec::new(),
            mi: Vec::new(),
            wall_clock_secs: 0.0,
            failed: None,
        }
    }

    pub fn is_failed(&self) -> bool {
        self.failed.is_some()
    }

    pub fn dir_name(&self) -> String {
        format!("{}-{}-seed{}-{}", self.env, self.mode, self.seed, self.config_hash)
    }

    /// The most recent evaluation episodes, up to `n`, newest last.
    pub fn final_eval(&self, n: usize) -> (Vec<f64>, Vec<JointBehavior>) {
        let returns: Vec<f64> = self.evals.iter().flat_map(|e| e.returns.iter().copied()).collect();
        let behaviors: Vec<JointBehavior> =
            self.evals.iter().flat_map(|e| e.behaviors.iter().copied()).collect();
        let r0 = returns.len().saturating_sub(n);
        let b0 = behaviors.len().saturating_sub(n);
        (returns[r0..].to_vec(), behaviors[b0..].to_vec())
    }

    /// Mean evaluation return over the final `n` evaluation episodes.
    pub fn final_mean_return(&self, n: usize) -> Option<f64> {
        let (r, _) = self.final_eval(n);
        (!r.is_empty()).then(|| r.iter().sum::<f64>() / r.len() as f64)
    }

    /// Most frequent label over the final `n` evaluation episodes; ties go
    /// to the better behavior.
    pub fn converged_behavior(&self, n: usize) -> Option<JointBehavior> {
        let (_, b) = self.final_eval(n);
        if b.is_empty() {
            return None;
        }
        JointBehavior::ALL
            .into_iter()
            .map(|label| (b.iter().filter(|x| **x == label).count(), label))
            .max_by(|x, y| x.0.cmp(&y.0).then(y.1.cmp(&x.1)))
            .map(|(_, label)| label)
    }

    pub fn episodes_csv(&self) -> String {
        let mut s = String::from(EPISODE_HEADER);
        s.push('\n');
        for r in &self.episodes {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.episode,
                r.step,
                r.episodic_return,
                r.r_low,
                r.r_bar,
                r.positive_len,
                r.negative_len,
                opt(r.mine_estimate),
                opt(r.club_estimate),
                opt(r.mean_r_pmic)
            );
        }
        s
    }

    pub fn eval_csv(&self) -> String {
        let mut s = String::from(EVAL_HEADER);
        s.push('\n');
        for r in &self.evals {
            let _ = write!(s, "{},{},{}", r.episode, r.step, r.mean_return);
            for b in JointBehavior::ALL {
                let _ = write!(s, ",{}", r.count(b));
            }
            s.push('\n');
        }
        s
    }

    pub fn mi_csv(&self) -> String {
        let mut s = String::from(MI_HEADER);
        s.push('\n');
        for r in &self.mi {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.step,
                opt(r.loss_mine),
                opt(r.loss_club),
                opt(r.mine_estimate),
                opt(r.club_estimate)
            );
        }
        s
    }

    /// Writes `episodes.csv`, `eval.csv`, `mi.csv` and `run.json` (the only
    /// file carrying wall-clock time).
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("episodes.csv"), self.episodes_csv())?;
        std::fs::write(dir.join("eval.csv"), self.eval_csv())?;
        std::fs::write(dir.join("mi.csv"), self.mi_csv())?;
        let meta = serde_json::json!({
            "config_hash": self.config_hash,
            "env": self.env,
            "mode": self.mode,
            "seed": self.seed,
            "episodes": self.episodes.len(),
            "evaluations": self.evals.len(),
            "final_mean_return": self.final_mean_return(super::FINAL_EVAL_EPISODES),
            "converged_behavior": self.converged_behavior(super::FINAL_EVAL_EPISODES),
            "wall_clock_secs": self.wall_clock_secs,
            "failed": self.failed,
        });
        std::fs::write(dir.join("run.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }
}
