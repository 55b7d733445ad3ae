//! JSON-lines trajectory dumps, one record per transition.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{GlobalState, JointAction, Observation, Trajectory, Transition};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub t: usize,
    pub state: Vec<f64>,
    pub obs: Vec<Vec<f64>>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub next_obs: Vec<Vec<f64>>,
    pub terminal: bool,
}

impl TransitionRecord {
    fn from_transition(t: usize, tr: &Transition) -> Self {
        TransitionRecord {
            t,
            state: tr.global_state.0.clone(),
            obs: tr.observations.iter().map(|o| o.0.clone()).collect(),
            action: tr.joint_action.as_slice().to_vec(),
            reward: tr.reward,
            next_state: tr.next_state.0.clone(),
            next_obs: tr.next_observations.iter().map(|o| o.0.clone()).collect(),
            terminal: tr.terminal,
        }
    }

    fn into_transition(self) -> Transition {
        Transition {
            global_state: GlobalState(self.state),
            observations: self.obs.into_iter().map(Observation).collect(),
            joint_action: JointAction::new(self.action),
            reward: self.reward,
            next_state: GlobalState(self.next_state),
            next_observations: self.next_obs.into_iter().map(Observation).collect(),
            terminal: self.terminal,
        }
    }
}

pub fn write_trajectory_jsonl<W: Write>(w: &mut W, traj: &Trajectory) -> Result<()> {
    for (t, tr) in traj.transitions().iter().enumerate() {
        serde_json::to_writer(&mut *w, &TransitionRecord::from_transition(t, tr))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads transitions back; blank lines are ignored.
pub fn read_trajectory_jsonl<R: BufRead>(r: R) -> Result<Trajectory> {
    let mut traj = Trajectory::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TransitionRecord = serde_json::from_str(&line)?;
        traj.push(rec.into_transition());
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{rollout, Environment, ParticleRescue, ParticleRescueConfig};

    #[test]
    fn dump_has_one_line_per_transition_and_reads_back() {
        let mut env = ParticleRescue::new(ParticleRescueConfig::default());
        let traj = rollout(&mut env, 4, |_, _| JointAction::new(vec![0.3, -0.2, 0.1, 0.9])).unwrap();
        let mut buf = Vec::new();
        write_trajectory_jsonl(&mut buf, &traj).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), env.horizon());
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["state", "obs", "action", "reward"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        let back = read_trajectory_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back.transitions(), traj.transitions());
        assert_eq!(back.episodic_return(), traj.episodic_return());
    }
}
