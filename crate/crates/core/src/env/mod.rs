//! Cooperative two-agent environments with a shared team reward.
//!
//! Both environments pay out the wildlife-rescue reward matrix at the end of
//! an episode, based on which target each agent ends up controlling.

mod dump;
mod particle_rescue;
mod target_bandit;

use serde::{Deserialize, Serialize};

pub use dump::{read_trajectory_jsonl, write_trajectory_jsonl, TransitionRecord};
pub use particle_rescue::{ParticleRescue, ParticleRescueConfig};
pub use target_bandit::{TargetBandit, TargetBanditConfig};

use crate::error::Result;

/// What an agent holds when the episode ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureStatus {
    Tiger,
    Deer,
    Cat,
    OnTheRoad,
}

impl CaptureStatus {
    pub const ALL: [CaptureStatus; 4] = [
        CaptureStatus::Tiger,
        CaptureStatus::Deer,
        CaptureStatus::Cat,
        CaptureStatus::OnTheRoad,
    ];

    /// The three rescue targets, in the order environments lay them out.
    pub const TARGETS: [CaptureStatus; 3] =
        [CaptureStatus::Tiger, CaptureStatus::Deer, CaptureStatus::Cat];

    fn index(self) -> usize {
        match self {
            CaptureStatus::Tiger => 0,
            CaptureStatus::Deer => 1,
            CaptureStatus::Cat => 2,
            CaptureStatus::OnTheRoad => 3,
        }
    }
}

/// Rows are agent 1's status, columns agent 2's, in `CaptureStatus::ALL` order.
const REWARD_MATRIX: [[f64; 4]; 4] = [
    [11.0, -30.0, 0.0, -30.0],
    [-30.0, 7.0, 6.0, -30.0],
    [0.0, 6.0, 5.0, 0.0],
    [-30.0, -10.0, 0.0, 0.0],
];

/// Team reward paid at the end of an episode.
///
/// The lookup is ordered: `(Deer, OnTheRoad)` pays -30 while
/// `(OnTheRoad, Deer)` pays -10. Every other pair is symmetric.
pub fn terminal_reward(agent1: CaptureStatus, agent2: CaptureStatus) -> f64 {
    REWARD_MATRIX[agent1.index()][agent2.index()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalState(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub Vec<f64>);

/// Concatenated per-agent actions, every component in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointAction(Vec<f64>);

impl JointAction {
    /// Clamps every component into `[-1, 1]`; NaN becomes 0.
    pub fn new(mut values: Vec<f64>) -> Self {
        for v in &mut values {
            *v = if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
        }
        JointAction(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn agent(&self, i: usize, action_dim: usize) -> &[f64] {
        &self.0[i * action_dim..(i + 1) * action_dim]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub global_state: GlobalState,
    pub observations: Vec<Observation>,
    pub joint_action: JointAction,
    /// Shared team reward.
    pub reward: f64,
    pub next_state: GlobalState,
    pub next_observations: Vec<Observation>,
    pub terminal: bool,
}

/// One episode's transitions and its undiscounted return.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    transitions: Vec<Transition>,
    episodic_return: f64,
    outcome: Option<(CaptureStatus, CaptureStatus)>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, transition: Transition) {
        self.episodic_return += transition.reward;
        self.transitions.push(transition);
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn episodic_return(&self) -> f64 {
        self.episodic_return
    }

    /// Capture statuses of both agents at the end of the episode.
    pub fn outcome(&self) -> Option<(CaptureStatus, CaptureStatus)> {
        self.outcome
    }

    pub fn set_outcome(&mut self, outcome: (CaptureStatus, CaptureStatus)) {
        self.outcome = Some(outcome);
    }
}

impl FromIterator<Transition> for Trajectory {
    fn from_iter<I: IntoIterator<Item = Transition>>(iter: I) -> Self {
        let mut t = Trajectory::new();
        for tr in iter {
            t.push(tr);
        }
        t
    }
}

/// A cooperative Dec-POMDP with continuous per-agent actions.
pub trait Environment: Send {
    fn name(&self) -> &'static str;
    fn num_agents(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    /// Per-agent action dimension.
    fn action_dim(&self) -> usize;
    /// Maximum episode length.
    fn horizon(&self) -> usize;
    fn reset(&mut self, seed: u64) -> (GlobalState, Vec<Observation>);
    /// Advances one tick. Fails if the episode is already over.
    fn step(&mut self, action: &JointAction) -> Result<(Transition, bool)>;
    /// Current capture status of each agent.
    fn capture_statuses(&self) -> (CaptureStatus, CaptureStatus);

    fn joint_action_dim(&self) -> usize {
        self.num_agents() * self.action_dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    TargetBandit,
    ParticleRescue,
}

impl EnvKind {
    pub fn build(self) -> Box<dyn Environment> {
        match self {
            EnvKind::TargetBandit => Box::new(TargetBandit::new(TargetBanditConfig::default())),
            EnvKind::ParticleRescue => {
                Box::new(ParticleRescue::new(ParticleRescueConfig::default()))
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::TargetBandit => "target_bandit",
            EnvKind::ParticleRescue => "particle_rescue",
        }
    }
}

impl std::str::FromStr for EnvKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target_bandit" => Ok(EnvKind::TargetBandit),
            "particle_rescue" => Ok(EnvKind::ParticleRescue),
            other => Err(crate::Error::InvalidConfig(format!("unknown env `{other}`"))),
        }
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Rolls one episode with `policy` and returns the finished trajectory.
pub fn rollout<F>(env: &mut dyn Environment, seed: u64, mut policy: F) -> Result<Trajectory>
where
    F: FnMut(&GlobalState, &[Observation]) -> JointAction,
{
    let (mut state, mut obs) = env.reset(seed);
    let mut traj = Trajectory::new();
    loop {
        let action = policy(&state, &obs);
        let (tr, done) = env.step(&action)?;
        state = tr.next_state.clone();
        obs = tr.next_observations.clone();
        traj.push(tr);
        if done {
            break;
        }
    }
    traj.set_outcome(env.capture_statuses());
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::CaptureStatus::*;
    use super::*;

    #[test]
    fn reward_matrix_cells() {
        assert_eq!(terminal_reward(Tiger, Tiger), 11.0);
        assert_eq!(terminal_reward(Tiger, Deer), -30.0);
        assert_eq!(terminal_reward(OnTheRoad, OnTheRoad), 0.0);
        assert_eq!(terminal_reward(Cat, Deer), 6.0);
        assert_eq!(terminal_reward(Deer, Deer), 7.0);
        assert_eq!(terminal_reward(Cat, Cat), 5.0);
        assert_eq!(terminal_reward(OnTheRoad, Deer), -10.0);
    }

    #[test]
    fn matrix_is_symmetric_except_deer_road() {
        let mut asymmetric = Vec::new();
        for a in CaptureStatus::ALL {
            for b in CaptureStatus::ALL {
                if terminal_reward(a, b) != terminal_reward(b, a) {
                    asymmetric.push((a, b));
                }
            }
        }
        assert_eq!(asymmetric, vec![(Deer, OnTheRoad), (OnTheRoad, Deer)]);
        assert_eq!(terminal_reward(Deer, OnTheRoad), -30.0);
    }

    #[test]
    fn tiger_pair_is_the_unique_optimum_and_cat_is_safest() {
        let mut best = Vec::new();
        for a in CaptureStatus::ALL {
            for b in CaptureStatus::ALL {
                if terminal_reward(a, b) == 11.0 {
                    best.push((a, b));
                }
                assert!(terminal_reward(a, b) <= 11.0);
            }
        }
        assert_eq!(best, vec![(Tiger, Tiger)]);
        assert!(terminal_reward(Deer, Deer) < 11.0 && terminal_reward(Cat, Cat) < 11.0);
        // worst case over partner deviations
        let risk = |s: CaptureStatus| {
            CaptureStatus::ALL
                .iter()
                .map(|&p| terminal_reward(s, p).min(terminal_reward(p, s)))
                .fold(f64::INFINITY, f64::min)
        };
        assert_eq!(risk(Cat), 0.0);
        assert_eq!(risk(Tiger), -30.0);
        assert!(risk(Cat) > risk(Deer) && risk(Cat) > risk(Tiger));
    }

    #[test]
    fn joint_action_is_clamped() {
        let a = JointAction::new(vec![-3.0, 0.25, 7.0, f64::NAN]);
        assert_eq!(a.as_slice(), &[-1.0, 0.25, 1.0, 0.0]);
    }

    #[test]
    fn trajectory_return_tracks_rewards() {
        let tr = |r| Transition {
            global_state: GlobalState(vec![0.0]),
            observations: vec![],
            joint_action: JointAction::new(vec![]),
            reward: r,
            next_state: GlobalState(vec![0.0]),
            next_observations: vec![],
            terminal: false,
        };
        let t: Trajectory = [1.5, -2.0, 4.0].into_iter().map(tr).collect();
        assert_eq!(t.len(), 3);
        assert_eq!(t.episodic_return(), 3.5);
    }
}
