use ndarray::{Array1, Array2};
use rand::Rng;

use crate::env::Transition;
use crate::error::{Error, Result};

/// Row layout of one stored transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplayShape {
    pub state_dim: usize,
    pub obs_dim: usize,
    pub num_agents: usize,
    pub action_dim: usize,
}

impl ReplayShape {
    pub fn joint_action_dim(&self) -> usize {
        self.num_agents * self.action_dim
    }

    fn joint_obs_dim(&self) -> usize {
        self.num_agents * self.obs_dim
    }
}

/// Bounded FIFO of transitions with uniform sampling.
///
/// Stored column-wise in flat ring buffers so sampling copies straight into
/// batch matrices.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    shape: ReplayShape,
    capacity: usize,
    len: usize,
    head: usize,
    states: Vec<f64>,
    obs: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    next_obs: Vec<f64>,
    terminals: Vec<bool>,
}

/// A sampled minibatch. `obs[i]` and `next_obs[i]` hold agent `i`'s rows.
#[derive(Debug, Clone)]
pub struct ReplayBatch {
    pub states: Array2<f64>,
    pub obs: Vec<Array2<f64>>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub next_obs: Vec<Array2<f64>>,
    pub terminals: Vec<bool>,
}

impl ReplayBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Builds a batch directly from transitions, in order.
    pub fn from_transitions(shape: ReplayShape, transitions: &[Transition]) -> Result<Self> {
        let mut buf = ReplayBuffer::new(shape, transitions.len().max(1))?;
        for t in transitions {
            buf.push(t)?;
        }
        let idx: Vec<usize> = (0..transitions.len()).collect();
        Ok(buf.gather(&idx))
    }
}

impl ReplayBuffer {
    pub fn new(shape: ReplayShape, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            shape,
            capacity,
            len: 0,
            head: 0,
            states: Vec::new(),
            obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            next_obs: Vec::new(),
            terminals: Vec::new(),
        })
    }

    pub fn shape(&self) -> ReplayShape {
        self.shape
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, t: &Transition) -> Result<()> {
        let sh = self.shape;
        let check = |what, expected: usize, got: usize| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::dims(what, expected, got))
            }
        };
        check("replay state", sh.state_dim, t.global_state.0.len())?;
        check("replay next state", sh.state_dim, t.next_state.0.len())?;
        check("replay action", sh.joint_action_dim(), t.joint_action.len())?;
        check("replay agents", sh.num_agents, t.observations.len())?;
        check("replay next agents", sh.num_agents, t.next_observations.len())?;
        for o in t.observations.iter().chain(&t.next_observations) {
            check("replay observation", sh.obs_dim, o.0.len())?;
        }

        let flat_obs = t.observations.iter().flat_map(|o| o.0.iter().copied());
        let flat_next = t.next_observations.iter().flat_map(|o| o.0.iter().copied());
        if self.len < self.capacity {
            self.states.extend_from_slice(&t.global_state.0);
            self.obs.extend(flat_obs);
            self.actions.extend_from_slice(t.joint_action.as_slice());
            self.rewards.push(t.reward);
            self.next_states.extend_from_slice(&t.next_state.0);
            self.next_obs.extend(flat_next);
            self.terminals.push(t.terminal);
            self.len += 1;
        } else {
            let h = self.head;
            let (sd, od, ad) = (sh.state_dim, sh.joint_obs_dim(), sh.joint_action_dim());
            self.states[h * sd..(h + 1) * sd].copy_from_slice(&t.global_state.0);
            for (slot, v) in self.obs[h * od..(h + 1) * od].iter_mut().zip(flat_obs) {
                *slot = v;
            }
            self.actions[h * ad..(h + 1) * ad].copy_from_slice(t.joint_action.as_slice());
            self.rewards[h] = t.reward;
            self.next_states[h * sd..(h + 1) * sd].copy_from_slice(&t.next_state.0);
            for (slot, v) in self.next_obs[h * od..(h + 1) * od].iter_mut().zip(flat_next) {
                *slot = v;
            }
            self.terminals[h] = t.terminal;
        }
        self.head = (self.head + 1) % self.capacity;
        Ok(())
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<ReplayBatch> {
        if self.len < batch || batch == 0 {
            return Err(Error::NotReady("replay holds fewer transitions than the batch size"));
        }
        let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..self.len)).collect();
        Ok(self.gather(&idx))
    }

    /// Copies the given slots into a batch. Slot order is insertion order
    /// until the buffer wraps.
    pub fn gather(&self, idx: &[usize]) -> ReplayBatch {
        let sh = self.shape;
        let (sd, od, ad, n) = (sh.state_dim, sh.obs_dim, sh.joint_action_dim(), sh.num_agents);
        let b = idx.len();
        let rows = |src: &[f64], width: usize| {
            let mut out = Array2::zeros((b, width));
            for (r, &i) in idx.iter().enumerate() {
                out.row_mut(r)
                    .iter_mut()
                    .zip(&src[i * width..(i + 1) * width])
                    .for_each(|(d, s)| *d = *s);
            }
            out
        };
        let agent_rows = |src: &[f64]| -> Vec<Array2<f64>> {
            (0..n)
                .map(|a| {
                    let mut out = Array2::zeros((b, od));
                    for (r, &i) in idx.iter().enumerate() {
                        let start = i * n * od + a * od;
                        out.row_mut(r)
                            .iter_mut()
                            .zip(&src[start..start + od])
                            .for_each(|(d, s)| *d = *s);
                    }
                    out
                })
                .collect()
        };
        ReplayBatch {
            states: rows(&self.states, sd),
            obs: agent_rows(&self.obs),
            actions: rows(&self.actions, ad),
            rewards: idx.iter().map(|&i| self.rewards[i]).collect(),
            next_states: rows(&self.next_states, sd),
            next_obs: agent_rows(&self.next_obs),
            terminals: idx.iter().map(|&i| self.terminals[i]).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{GlobalState, JointAction, Observation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SHAPE: ReplayShape = ReplayShape {
        state_dim: 2,
        obs_dim: 1,
        num_agents: 2,
        action_dim: 1,
    };

    fn tr(id: f64) -> Transition {
        Transition {
            global_state: GlobalState(vec![id, -id]),
            observations: vec![Observation(vec![id + 0.1]), Observation(vec![id + 0.2])],
            joint_action: JointAction::new(vec![0.01 * id, -0.01 * id]),
            reward: id,
            next_state: GlobalState(vec![id + 1.0, 0.0]),
            next_observations: vec![Observation(vec![id + 0.3]), Observation(vec![id + 0.4])],
            terminal: id as i64 % 2 == 0,
        }
    }

    #[test]
    fn gather_lays_out_rows() {
        let b = ReplayBatch::from_transitions(SHAPE, &[tr(1.0), tr(2.0)]).unwrap();
        assert_eq!(b.states.row(1).to_vec(), vec![2.0, -2.0]);
        assert_eq!(b.obs[0].column(0).to_vec(), vec![1.1, 2.1]);
        assert_eq!(b.obs[1].column(0).to_vec(), vec![1.2, 2.2]);
        assert_eq!(b.next_obs[1][[0, 0]], 1.4);
        assert_eq!(b.actions.row(0).to_vec(), vec![0.01, -0.01]);
        assert_eq!(b.terminals, vec![false, true]);
        assert_eq!(b.rewards.to_vec(), vec![1.0, 2.0]);
    }

    #[test]
    fn fifo_overwrite_and_bounded_size() {
        let mut buf = ReplayBuffer::new(SHAPE, 3).unwrap();
        for i in 0..5 {
            buf.push(&tr(i as f64)).unwrap();
            assert!(buf.len() <= 3);
        }
        let b = buf.gather(&[0, 1, 2]);
        // slots 0 and 1 were overwritten by transitions 3 and 4
        assert_eq!(b.rewards.to_vec(), vec![3.0, 4.0, 2.0]);
    }

    #[test]
    fn sampling_is_uniform() {
        let mut buf = ReplayBuffer::new(SHAPE, 10).unwrap();
        for i in 0..10 {
            buf.push(&tr(i as f64)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut counts = [0usize; 10];
        for _ in 0..2000 {
            let b = buf.sample(10, &mut rng).unwrap();
            for r in b.rewards.iter() {
                counts[*r as usize] += 1;
            }
        }
        for c in counts {
            assert!((c as f64 - 2000.0).abs() < 200.0, "{counts:?}");
        }
    }

    #[test]
    fn not_ready_and_shape_errors() {
        let mut buf = ReplayBuffer::new(SHAPE, 4).unwrap();
        buf.push(&tr(1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(buf.sample(2, &mut rng), Err(Error::NotReady(_))));
        let mut bad = tr(1.0);
        bad.global_state = GlobalState(vec![1.0]);
        assert!(buf.push(&bad).is_err());
        assert!(ReplayBuffer::new(SHAPE, 0).is_err());
    }
}
