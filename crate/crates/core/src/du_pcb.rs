//! Dual progressive collaboration buffer.
//!
//! Finished episodes are split by return. An episode whose return beats both
//! the weakest positive episode (`R_low`) and the mean of the last `M` returns
//! (`R̄`) joins the positive store, displacing a weakest entry once the store
//! is full, so the positive store's minimum return never decreases. Every
//! other episode goes to a FIFO negative store.
//!
//! Only the `(global state, joint action)` pairs are retained; that is all the
//! mutual-information estimators read.

use std::collections::VecDeque;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Trajectory;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcbConfig {
    pub positive_capacity: usize,
    pub negative_capacity: usize,
    /// Number of recent returns averaged into `R̄`.
    pub window: usize,
}

impl Default for PcbConfig {
    fn default() -> Self {
        PcbConfig {
            positive_capacity: 1000,
            negative_capacity: 1000,
            window: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTrajectory {
    pub episodic_return: f64,
    pub insertion_index: u64,
    len: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
}

impl StoredTrajectory {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn state(&self, t: usize, dim: usize) -> &[f64] {
        &self.states[t * dim..(t + 1) * dim]
    }

    pub fn action(&self, t: usize, dim: usize) -> &[f64] {
        &self.actions[t * dim..(t + 1) * dim]
    }
}

/// `(state, action)` pairs, one per row of each matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_rows(states: &[Vec<f64>], actions: &[Vec<f64>]) -> Result<Self> {
        if states.len() != actions.len() {
            return Err(Error::dims("pair batch", states.len(), actions.len()));
        }
        let sd = states.first().map_or(0, Vec::len);
        let ad = actions.first().map_or(0, Vec::len);
        let flat_s: Vec<f64> = states.iter().flatten().copied().collect();
        let flat_a: Vec<f64> = actions.iter().flatten().copied().collect();
        if flat_s.len() != sd * states.len() || flat_a.len() != ad * actions.len() {
            return Err(Error::InvalidConfig("ragged pair batch".into()));
        }
        Ok(PairBatch {
            states: Array2::from_shape_vec((states.len(), sd), flat_s).unwrap(),
            actions: Array2::from_shape_vec((actions.len(), ad), flat_a).unwrap(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcbStats {
    /// Minimum return in the positive store, `-inf` when empty.
    pub r_low: f64,
    /// Mean of the recent-return window, `-inf` when empty.
    pub r_bar: f64,
    pub positive_len: usize,
    pub negative_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub episodic_return: f64,
    pub length: usize,
    pub insertion_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub positive: Vec<SnapshotEntry>,
    pub negative: Vec<SnapshotEntry>,
}

#[derive(Debug, Clone)]
pub struct DuPcb {
    config: PcbConfig,
    positive: Vec<StoredTrajectory>,
    negative: VecDeque<StoredTrajectory>,
    recent_returns: VecDeque<f64>,
    r_low: f64,
    inserted: u64,
    dims: Option<(usize, usize)>,
}

impl DuPcb {
    pub fn new(config: PcbConfig) -> Result<Self> {
        if config.positive_capacity == 0 || config.negative_capacity == 0 || config.window == 0 {
            return Err(Error::InvalidConfig(format!(
                "buffer capacities and return window must be positive: {config:?}"
            )));
        }
        Ok(DuPcb {
            config,
            positive: Vec::new(),
            negative: VecDeque::new(),
            recent_returns: VecDeque::new(),
            r_low: f64::NEG_INFINITY,
            inserted: 0,
            dims: None,
        })
    }

    pub fn config(&self) -> &PcbConfig {
        &self.config
    }

    pub fn positive(&self) -> &[StoredTrajectory] {
        &self.positive
    }

    pub fn negative(&self) -> impl Iterator<Item = &StoredTrajectory> {
        self.negative.iter()
    }

    pub fn store(&self, which: Placement) -> Vec<&StoredTrajectory> {
        match which {
            Placement::Positive => self.positive.iter().collect(),
            Placement::Negative => self.negative.iter().collect(),
        }
    }

    pub fn r_low(&self) -> f64 {
        self.r_low
    }

    pub fn r_bar(&self) -> f64 {
        if self.recent_returns.is_empty() {
            f64::NEG_INFINITY
        } else {
            self.recent_returns.iter().sum::<f64>() / self.recent_returns.len() as f64
        }
    }

    /// Admission threshold `max(R_low, R̄)`.
    pub fn threshold(&self) -> f64 {
        self.r_low.max(self.r_bar())
    }

    pub fn stats(&self) -> PcbStats {
        PcbStats {
            r_low: self.r_low,
            r_bar: self.r_bar(),
            positive_len: self.positive.len(),
            negative_len: self.negative.len(),
        }
    }

    /// Routes a finished trajectory and returns where it went.
    ///
    /// # Panics
    ///
    /// If the trajectory's state or action width differs from earlier ones.
    pub fn insert(&mut self, traj: &Trajectory) -> Placement {
        let ret = traj.episodic_return();
        let stored = self.compact(traj, ret);
        let placement = if ret > self.threshold() {
            if self.positive.len() < self.config.positive_capacity {
                self.positive.push(stored);
            } else {
                let victim = self
                    .positive
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| t.episodic_return == self.r_low)
                    .min_by_key(|(_, t)| t.insertion_index)
                    .map(|(i, _)| i)
                    .expect("a full positive store attains its minimum");
                self.positive[victim] = stored;
            }
            self.r_low = self
                .positive
                .iter()
                .map(|t| t.episodic_return)
                .fold(f64::INFINITY, f64::min);
            Placement::Positive
        } else {
            if self.negative.len() == self.config.negative_capacity {
                self.negative.pop_front();
            }
            self.negative.push_back(stored);
            Placement::Negative
        };
        if self.recent_returns.len() == self.config.window {
            self.recent_returns.pop_front();
        }
        self.recent_returns.push_back(ret);
        placement
    }

    fn compact(&mut self, traj: &Trajectory, ret: f64) -> StoredTrajectory {
        let mut states = Vec::new();
        let mut actions = Vec::new();
        for tr in traj.transitions() {
            states.extend_from_slice(&tr.global_state.0);
            actions.extend_from_slice(tr.joint_action.as_slice());
        }
        if let Some(first) = traj.transitions().first() {
            let dims = (first.global_state.0.len(), first.joint_action.len());
            let expected = *self.dims.get_or_insert(dims);
            assert_eq!(expected, dims, "trajectory dimensions changed");
            assert_eq!(states.len(), dims.0 * traj.len(), "ragged states");
            assert_eq!(actions.len(), dims.1 * traj.len(), "ragged actions");
        }
        let stored = StoredTrajectory {
            episodic_return: ret,
            insertion_index: self.inserted,
            len: traj.len(),
            states,
            actions,
        };
        self.inserted += 1;
        stored
    }

    /// Number of transitions held in a store.
    pub fn transition_count(&self, which: Placement) -> usize {
        self.store(which).iter().map(|t| t.len).sum()
    }

    /// `batch` pairs `(s_t, u_t)` drawn uniformly over every stored transition.
    pub fn sample_joint<R: Rng + ?Sized>(
        &self,
        which: Placement,
        batch: usize,
        rng: &mut R,
    ) -> Result<PairBatch> {
        let index = TransitionIndex::new(self.store(which))?;
        let (sd, ad) = self.dims.expect("non-empty store has dimensions");
        let mut states = Vec::with_capacity(batch * sd);
        let mut actions = Vec::with_capacity(batch * ad);
        for _ in 0..batch {
            let (traj, t) = index.draw(rng);
            states.extend_from_slice(traj.state(t, sd));
            actions.extend_from_slice(traj.action(t, ad));
        }
        Ok(PairBatch {
            states: Array2::from_shape_vec((batch, sd), states).unwrap(),
            actions: Array2::from_shape_vec((batch, ad), actions).unwrap(),
        })
    }

    /// `batch` pairs `(s_t, u_k)` with state and action taken from two
    /// independently drawn transitions.
    pub fn sample_marginal<R: Rng + ?Sized>(
        &self,
        which: Placement,
        batch: usize,
        rng: &mut R,
    ) -> Result<PairBatch> {
        let index = TransitionIndex::new(self.store(which))?;
        let (sd, ad) = self.dims.expect("non-empty store has dimensions");
        let mut states = Vec::with_capacity(batch * sd);
        let mut actions = Vec::with_capacity(batch * ad);
        for _ in 0..batch {
            let (traj, t) = index.draw(rng);
            states.extend_from_slice(traj.state(t, sd));
            let (traj, k) = index.draw(rng);
            actions.extend_from_slice(traj.action(k, ad));
        }
        Ok(PairBatch {
            states: Array2::from_shape_vec((batch, sd), states).unwrap(),
            actions: Array2::from_shape_vec((batch, ad), actions).unwrap(),
        })
    }

    pub fn snapshot(&self) -> Snapshot {
        let entries = |it: Vec<&StoredTrajectory>| {
            it.into_iter()
                .map(|t| SnapshotEntry {
                    episodic_return: t.episodic_return,
                    length: t.len,
                    insertion_index: t.insertion_index,
                })
                .collect()
        };
        Snapshot {
            positive: entries(self.store(Placement::Positive)),
            negative: entries(self.store(Placement::Negative)),
        }
    }

    pub fn snapshot_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.snapshot())?)
    }
}

/// Cumulative transition counts for uniform sampling across trajectories.
struct TransitionIndex<'a> {
    trajs: Vec<&'a StoredTrajectory>,
    ends: Vec<usize>,
}

impl<'a> TransitionIndex<'a> {
    fn new(trajs: Vec<&'a StoredTrajectory>) -> Result<Self> {
        let mut acc = 0;
        let ends: Vec<usize> = trajs
            .iter()
            .map(|t| {
                acc += t.len;
                acc
            })
            .collect();
        if acc == 0 {
            return Err(Error::NotReady("trajectory store holds no transitions"));
        }
        Ok(TransitionIndex { trajs, ends })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (&'a StoredTrajectory, usize) {
        let total = *self.ends.last().unwrap();
        let k = rng.random_range(0..total);
        let i = self.ends.partition_point(|&e| e <= k);
        let start = if i == 0 { 0 } else { self.ends[i - 1] };
        (self.trajs[i], k - start)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{GlobalState, JointAction, Transition};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Trajectory whose transitions carry `(tag, t)` in the state and action.
    fn traj(ret: f64, len: usize, tag: f64) -> Trajectory {
        let mut t = Trajectory::new();
        for i in 0..len {
            t.push(Transition {
                global_state: GlobalState(vec![tag, i as f64]),
                observations: vec![],
                joint_action: JointAction::new(vec![tag / 1000.0, i as f64 / 1000.0]),
                reward: if i == 0 { ret } else { 0.0 },
                next_state: GlobalState(vec![tag, i as f64 + 1.0]),
                next_observations: vec![],
                terminal: i + 1 == len,
            });
        }
        t
    }

    fn pcb(pos: usize, neg: usize, window: usize) -> DuPcb {
        DuPcb::new(PcbConfig {
            positive_capacity: pos,
            negative_capacity: neg,
            window,
        })
        .unwrap()
    }

    #[test]
    fn first_trajectory_is_positive() {
        let mut b = pcb(3, 3, 100);
        assert_eq!(b.stats().r_low, f64::NEG_INFINITY);
        assert_eq!(b.stats().r_bar, f64::NEG_INFINITY);
        assert_eq!(b.insert(&traj(5.0, 1, 0.0)), Placement::Positive);
        assert_eq!(b.r_low(), 5.0);
    }

    #[test]
    fn full_positive_store_replaces_its_weakest() {
        let mut b = pcb(3, 3, 100);
        // seed the positive store with returns 3, 4, 5 while the window mean stays below
        for r in [3.0, 4.0, 5.0] {
            assert_eq!(b.insert(&traj(r, 1, r)), Placement::Positive);
        }
        // push R̄ to exactly 2 without disturbing the positive store
        b.recent_returns = [1.0, 2.0, 3.0].into_iter().collect();
        assert_eq!(b.r_bar(), 2.0);
        assert_eq!(b.insert(&traj(6.0, 1, 6.0)), Placement::Positive);
        let mut rets: Vec<f64> = b.positive().iter().map(|t| t.episodic_return).collect();
        rets.sort_by(f64::total_cmp);
        assert_eq!(rets, vec![4.0, 5.0, 6.0]);
        assert_eq!(b.r_low(), 4.0);
    }

    #[test]
    fn below_threshold_goes_negative_and_evicts_oldest() {
        let mut b = pcb(2, 2, 100);
        b.insert(&traj(4.0, 1, 0.0));
        b.recent_returns = [7.0].into_iter().collect();
        assert_eq!(b.threshold(), 7.0);
        assert_eq!(b.insert(&traj(5.0, 1, 1.0)), Placement::Negative);
        assert_eq!(b.insert(&traj(5.0, 1, 2.0)), Placement::Negative);
        assert_eq!(b.insert(&traj(5.0, 1, 3.0)), Placement::Negative);
        let idx: Vec<u64> = b.negative().map(|t| t.insertion_index).collect();
        assert_eq!(idx, vec![2, 3]);
    }

    #[test]
    fn tie_with_threshold_is_negative() {
        let mut b = pcb(4, 4, 100);
        b.insert(&traj(3.0, 1, 0.0));
        // threshold is now max(3, 3) = 3
        assert_eq!(b.insert(&traj(3.0, 1, 1.0)), Placement::Negative);
    }

    #[test]
    fn oldest_of_tied_minima_is_replaced() {
        let mut b = pcb(3, 3, 1);
        for tag in [0.0, 1.0] {
            b.positive.push(b.clone().compact(&traj(2.0, 1, tag), 2.0));
        }
        // keep insertion indices distinct and ordered
        b.positive[0].insertion_index = 10;
        b.positive[1].insertion_index = 11;
        b.positive.push(StoredTrajectory { insertion_index: 12, ..b.positive[0].clone() });
        b.positive[2].episodic_return = 9.0;
        b.r_low = 2.0;
        b.recent_returns.clear();
        assert_eq!(b.insert(&traj(5.0, 1, 7.0)), Placement::Positive);
        let idx: Vec<u64> = b.positive().iter().map(|t| t.insertion_index).collect();
        assert!(!idx.contains(&10) && idx.contains(&11));
        assert_eq!(b.r_low(), 2.0);
    }

    #[test]
    fn window_mean_uses_only_recent_returns() {
        let mut b = pcb(1000, 1000, 100);
        let returns: Vec<f64> = (0..150).map(|i| ((i * 7919) % 101) as f64 - 50.0).collect();
        for (i, &r) in returns.iter().enumerate() {
            b.insert(&traj(r, 1, i as f64));
        }
        let want = returns[50..].iter().sum::<f64>() / 100.0;
        assert!((b.r_bar() - want).abs() < 1e-12);

        let mut small = pcb(10, 10, 3);
        for r in [1.0, 2.0, 3.0] {
            small.insert(&traj(r, 1, r));
        }
        assert_eq!(small.stats().r_bar, 2.0);
    }

    #[test]
    fn single_transition_store_always_returns_it() {
        let mut b = pcb(5, 5, 10);
        b.insert(&traj(1.0, 1, 42.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let j = b.sample_joint(Placement::Positive, 8, &mut rng).unwrap();
        let m = b.sample_marginal(Placement::Positive, 8, &mut rng).unwrap();
        for batch in [j, m] {
            for r in 0..8 {
                assert_eq!(batch.states.row(r).to_vec(), vec![42.0, 0.0]);
                assert_eq!(batch.actions.row(r).to_vec(), vec![0.042, 0.0]);
            }
        }
    }

    #[test]
    fn empty_store_is_not_ready() {
        let b = pcb(5, 5, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            b.sample_joint(Placement::Negative, 4, &mut rng),
            Err(Error::NotReady(_))
        ));
        assert!(b.sample_marginal(Placement::Positive, 4, &mut rng).is_err());
    }

    /// Six transitions over two 3-step trajectories in the positive store.
    fn six_transition_store() -> DuPcb {
        let mut b = pcb(5, 5, 10);
        b.insert(&traj(1.0, 3, 1.0));
        b.insert(&traj(2.0, 3, 2.0));
        assert_eq!(b.transition_count(Placement::Positive), 6);
        b
    }

    fn transition_id(state: &[f64]) -> usize {
        (state[0] as usize - 1) * 3 + state[1] as usize
    }

    #[test]
    fn joint_sampling_is_uniform_over_transitions() {
        let b = six_transition_store();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let batch = b.sample_joint(Placement::Positive, 4, &mut rng).unwrap();
        assert_eq!(batch.len(), 4);
        let mut counts = [0usize; 6];
        let draws = 60_000;
        let batch = b.sample_joint(Placement::Positive, draws, &mut rng).unwrap();
        for r in 0..draws {
            let s = batch.states.row(r);
            let a = batch.actions.row(r);
            // pairs stay joint
            assert_eq!(a[0] * 1000.0, s[0]);
            assert!((a[1] * 1000.0 - s[1]).abs() < 1e-9);
            counts[transition_id(s.as_slice().unwrap())] += 1;
        }
        for c in counts {
            let f = c as f64 / draws as f64;
            assert!((f - 1.0 / 6.0).abs() < 0.05 / 6.0, "{counts:?}");
        }
        // chi-square with 5 dof, 0.999 quantile is 20.52
        let e = draws as f64 / 6.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 20.52, "chi2 = {chi2}");
    }

    #[test]
    fn marginal_sampling_is_independent() {
        let b = six_transition_store();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 360_000;
        let batch = b.sample_marginal(Placement::Positive, draws, &mut rng).unwrap();
        let mut joint = [[0usize; 6]; 6];
        for r in 0..draws {
            let s = batch.states.row(r);
            let a = batch.actions.row(r);
            let si = transition_id(s.as_slice().unwrap());
            let ai = transition_id(&[(a[0] * 1000.0).round(), (a[1] * 1000.0).round()]);
            joint[si][ai] += 1;
        }
        let n = draws as f64;
        for (si, row) in joint.iter().enumerate() {
            let ps = row.iter().sum::<usize>() as f64 / n;
            for ai in 0..6 {
                let pa = joint.iter().map(|r| r[ai]).sum::<usize>() as f64 / n;
                let pj = row[ai] as f64 / n;
                assert!((pj - ps * pa).abs() < 0.05 * ps * pa, "cell ({si},{ai})");
            }
        }
    }

    #[test]
    fn snapshot_lists_both_stores() {
        let mut b = pcb(2, 2, 10);
        b.insert(&traj(5.0, 2, 0.0));
        b.insert(&traj(1.0, 3, 1.0));
        let snap = b.snapshot();
        assert_eq!(snap.positive.len(), 1);
        assert_eq!(snap.negative.len(), 1);
        assert_eq!(snap.negative[0].length, 3);
        assert_eq!(snap.negative[0].insertion_index, 1);
        let json: serde_json::Value = serde_json::from_str(&b.snapshot_json().unwrap()).unwrap();
        assert_eq!(json["positive"][0]["episodic_return"], 5.0);
    }

    #[test]
    fn zero_capacity_is_rejected() {
        assert!(DuPcb::new(PcbConfig { positive_capacity: 0, ..Default::default() }).is_err());
    }
}
