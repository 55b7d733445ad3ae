//! Two point-mass rescuers and three static targets in `[-1, 1]^2`.
//!
//! Each agent is a damped double integrator driven by its 2-D action. An
//! agent within the capture radius of a target advances that target's hold
//! timer; leaving resets it. After `hold_ticks` consecutive ticks the agent
//! controls the target. The only reward is the matrix payout on the final
//! tick, according to what each agent controls then.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    terminal_reward, CaptureStatus, Environment, GlobalState, JointAction, Observation,
    Transition,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRescueConfig {
    pub horizon: usize,
    pub dt: f64,
    pub accel: f64,
    pub damping: f64,
    pub capture_radius: f64,
    /// Consecutive ticks inside the capture radius needed for control.
    pub hold_ticks: u32,
    pub view_radius: f64,
    /// Nominal tiger, deer and cat positions.
    pub target_anchors: [[f64; 2]; 3],
    /// Per-reset uniform jitter applied to each anchor coordinate.
    pub target_jitter: f64,
    /// Agents spawn uniformly in `[-spawn_half_width, spawn_half_width]^2`.
    pub spawn_half_width: f64,
}

impl Default for ParticleRescueConfig {
    fn default() -> Self {
        ParticleRescueConfig {
            horizon: 60,
            dt: 0.1,
            accel: 1.0,
            damping: 0.25,
            capture_radius: 0.1,
            hold_ticks: 8,
            view_radius: 0.5,
            target_anchors: [[0.0, 0.3], [-0.26, -0.15], [0.26, -0.15]],
            target_jitter: 0.05,
            spawn_half_width: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Body {
    pos: [f64; 2],
    vel: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct ParticleRescue {
    config: ParticleRescueConfig,
    agents: [Body; 2],
    targets: [[f64; 2]; 3],
    /// `timers[agent][target]`: consecutive ticks inside the capture radius.
    timers: [[u32; 3]; 2],
    step_count: usize,
    done: bool,
}

const STATE_DIM: usize = 8 + 6 + 6 + 1;
const OBS_DIM: usize = 4 + 6 + 3 + 5 + 1;

impl ParticleRescue {
    pub fn new(config: ParticleRescueConfig) -> Self {
        ParticleRescue {
            config,
            agents: [Body::default(); 2],
            targets: [[0.0; 2]; 3],
            timers: [[0; 3]; 2],
            step_count: 0,
            done: true,
        }
    }

    pub fn config(&self) -> &ParticleRescueConfig {
        &self.config
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn timers(&self) -> [[u32; 3]; 2] {
        self.timers
    }

    pub fn target_positions(&self) -> [[f64; 2]; 3] {
        self.targets
    }

    pub fn agent_position(&self, agent: usize) -> [f64; 2] {
        self.agents[agent].pos
    }

    /// Places agents and targets directly; velocities and timers are zeroed.
    pub fn set_layout(&mut self, agents: [[f64; 2]; 2], targets: [[f64; 2]; 3]) {
        for (b, p) in self.agents.iter_mut().zip(agents) {
            *b = Body { pos: p, vel: [0.0; 2] };
        }
        self.targets = targets;
        self.timers = [[0; 3]; 2];
        self.step_count = 0;
        self.done = false;
    }

    fn status_of(&self, agent: usize) -> CaptureStatus {
        self.timers[agent]
            .iter()
            .position(|&t| t >= self.config.hold_ticks)
            .map(|i| CaptureStatus::TARGETS[i])
            .unwrap_or(CaptureStatus::OnTheRoad)
    }

    fn timer_feature(&self, t: u32) -> f64 {
        t.min(self.config.hold_ticks) as f64 / self.config.hold_ticks as f64
    }

    fn time_feature(&self) -> f64 {
        self.step_count as f64 / self.config.horizon as f64
    }

    fn state(&self) -> GlobalState {
        let mut s = Vec::with_capacity(STATE_DIM);
        for b in &self.agents {
            s.extend_from_slice(&b.pos);
            s.extend_from_slice(&b.vel);
        }
        for t in &self.targets {
            s.extend_from_slice(t);
        }
        for row in &self.timers {
            for &t in row {
                s.push(self.timer_feature(t));
            }
        }
        s.push(self.time_feature());
        GlobalState(s)
    }

    fn observations(&self) -> Vec<Observation> {
        (0..2)
            .map(|i| {
                let me = self.agents[i];
                let mate = self.agents[1 - i];
                let mut o = Vec::with_capacity(OBS_DIM);
                o.extend_from_slice(&me.pos);
                o.extend_from_slice(&me.vel);
                for t in &self.targets {
                    o.push(t[0] - me.pos[0]);
                    o.push(t[1] - me.pos[1]);
                }
                for &t in &self.timers[i] {
                    o.push(self.timer_feature(t));
                }
                let rel = [mate.pos[0] - me.pos[0], mate.pos[1] - me.pos[1]];
                if (rel[0] * rel[0] + rel[1] * rel[1]).sqrt() <= self.config.view_radius {
                    o.extend_from_slice(&rel);
                    o.extend_from_slice(&mate.vel);
                    o.push(1.0);
                } else {
                    o.extend_from_slice(&[0.0; 5]);
                }
                o.push(self.time_feature());
                Observation(o)
            })
            .collect()
    }
}

impl Environment for ParticleRescue {
    fn name(&self) -> &'static str {
        "particle_rescue"
    }

    fn num_agents(&self) -> usize {
        2
    }

    fn state_dim(&self) -> usize {
        STATE_DIM
    }

    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn reset(&mut self, seed: u64) -> (GlobalState, Vec<Observation>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &self.config;
        let spawn = c.spawn_half_width;
        let mut agents = [[0.0; 2]; 2];
        for p in &mut agents {
            *p = [rng.random_range(-spawn..=spawn), rng.random_range(-spawn..=spawn)];
        }
        let mut targets = c.target_anchors;
        if c.target_jitter > 0.0 {
            for t in &mut targets {
                for v in t.iter_mut() {
                    *v += rng.random_range(-c.target_jitter..=c.target_jitter);
                }
            }
        }
        self.set_layout(agents, targets);
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
        let c = &self.config;
        for (i, body) in self.agents.iter_mut().enumerate() {
            let a = action.agent(i, 2);
            for (k, &ak) in a.iter().enumerate() {
                body.vel[k] += ak * c.accel * c.dt - c.damping * body.vel[k];
                body.pos[k] += body.vel[k] * c.dt;
                if body.pos[k].abs() > 1.0 {
                    body.pos[k] = body.pos[k].clamp(-1.0, 1.0);
                    body.vel[k] = 0.0;
                }
            }
        }
        for (i, body) in self.agents.iter().enumerate() {
            for (j, t) in self.targets.iter().enumerate() {
                let d = ((body.pos[0] - t[0]).powi(2) + (body.pos[1] - t[1]).powi(2)).sqrt();
                if d <= c.capture_radius {
                    self.timers[i][j] += 1;
                } else {
                    self.timers[i][j] = 0;
                }
            }
        }
        self.step_count += 1;
        let done = self.step_count >= c.horizon;
        self.done = done;
        let reward = if done {
            terminal_reward(self.status_of(0), self.status_of(1))
        } else {
            0.0
        };
        let tr = Transition {
            global_state: state,
            observations,
            joint_action: action.clone(),
            reward,
            next_state: self.state(),
            next_observations: self.observations(),
            terminal: done,
        };
        Ok((tr, done))
    }

    fn capture_statuses(&self) -> (CaptureStatus, CaptureStatus) {
        (self.status_of(0), self.status_of(1))
    }
}
