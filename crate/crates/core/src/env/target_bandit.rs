//! One-step continuous coordination game.
//!
//! Each agent names a point in `[-1, 1]^2`. The nearest target disc decides
//! what it rescues; a point farther than the disc radius from every anchor is
//! on the road. The episode ends immediately with the matrix reward.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CaptureStatus, Environment, GlobalState, JointAction, Observation, Transition};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TargetBanditConfig {
    /// Anchor points for tiger, deer and cat.
    pub anchors: [[f64; 2]; 3],
    pub disc_radius: f64,
}

impl Default for TargetBanditConfig {
    fn default() -> Self {
        TargetBanditConfig {
            anchors: [[0.0, 0.75], [-0.65, -0.375], [0.65, -0.375]],
            disc_radius: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TargetBandit {
    config: TargetBanditConfig,
    agents: [[f64; 2]; 2],
    statuses: (CaptureStatus, CaptureStatus),
    done: bool,
}

impl TargetBandit {
    pub fn new(config: TargetBanditConfig) -> Self {
        TargetBandit {
            config,
            agents: [[0.0; 2]; 2],
            statuses: (CaptureStatus::OnTheRoad, CaptureStatus::OnTheRoad),
            done: true,
        }
    }

    pub fn config(&self) -> &TargetBanditConfig {
        &self.config
    }

    /// Status of an agent that picked `point`.
    pub fn classify_point(&self, point: [f64; 2]) -> CaptureStatus {
        let (idx, dist) = self
            .config
            .anchors
            .iter()
            .map(|a| ((a[0] - point[0]).powi(2) + (a[1] - point[1]).powi(2)).sqrt())
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, d)| if d < best.1 { (i, d) } else { best });
        if dist > self.config.disc_radius {
            CaptureStatus::OnTheRoad
        } else {
            CaptureStatus::TARGETS[idx]
        }
    }

    fn state(&self) -> GlobalState {
        let mut s = Vec::with_capacity(10);
        for a in &self.config.anchors {
            s.extend_from_slice(a);
        }
        for p in &self.agents {
            s.extend_from_slice(p);
        }
        GlobalState(s)
    }

    fn observations(&self) -> Vec<Observation> {
        self.agents
            .iter()
            .map(|p| {
                let mut o = Vec::with_capacity(8);
                o.extend_from_slice(p);
                for a in &self.config.anchors {
                    o.extend_from_slice(a);
                }
                Observation(o)
            })
            .collect()
    }
}

impl Environment for TargetBandit {
    fn name(&self) -> &'static str {
        "target_bandit"
    }

    fn num_agents(&self) -> usize {
        2
    }

    fn state_dim(&self) -> usize {
        10
    }

    fn obs_dim(&self) -> usize {
        8
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn horizon(&self) -> usize {
        1
    }

    fn reset(&mut self, seed: u64) -> (GlobalState, Vec<Observation>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut self.agents {
            *p = [rng.random::<f64>(), rng.random::<f64>()];
        }
        self.statuses = (CaptureStatus::OnTheRoad, CaptureStatus::OnTheRoad);
        self.done = false;
        (self.state(), self.observations())
    }

    fn step(&mut self, action: &JointAction) -> Result<(Transition, bool)> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        if action.len() != 4 {
            return Err(Error::dims("joint action", 4, action.len()));
        }
        let state = self.state();
        let observations = self.observations();
        let a = action.as_slice();
        self.statuses = (
            self.classify_point([a[0], a[1]]),
            self.classify_point([a[2], a[3]]),
        );
        self.done = true;
        let reward = super::terminal_reward(self.statuses.0, self.statuses.1);
        let tr = Transition {
            global_state: state.clone(),
            observations: observations.clone(),
            joint_action: action.clone(),
            reward,
            next_state: state,
            next_observations: observations,
            terminal: true,
        };
        Ok((tr, true))
    }

    fn capture_statuses(&self) -> (CaptureStatus, CaptureStatus) {
        self.statuses
    }
}
