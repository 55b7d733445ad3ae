//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::VecDeque;

use pmic_core::du_pcb::{DuPcb, PcbConfig, Placement, Snapshot};
use pmic_core::env::{GlobalState, JointAction, Trajectory, Transition};

/// Straight-line model of the dual buffer, recomputing everything from
/// scratch after every insertion.
#[derive(Debug, Clone)]
pub struct PcbOracle {
    pub positive_capacity: usize,
    pub negative_capacity: usize,
    pub window: usize,
    /// `(return, insertion index)`
    pub positive: Vec<(f64, u64)>,
    pub negative: VecDeque<(f64, u64)>,
    pub history: Vec<f64>,
}

impl PcbOracle {
    pub fn new(config: PcbConfig) -> Self {
        PcbOracle {
            positive_capacity: config.positive_capacity,
            negative_capacity: config.negative_capacity,
            window: config.window,
            positive: Vec::new(),
            negative: VecDeque::new(),
            history: Vec::new(),
        }
    }

    pub fn r_low(&self) -> f64 {
        if self.positive.is_empty() {
            return f64::NEG_INFINITY;
        }
        self.positive.iter().map(|p| p.0).fold(f64::INFINITY, f64::min)
    }

    pub fn r_bar(&self) -> f64 {
        let start = self.history.len().saturating_sub(self.window);
        let recent = &self.history[start..];
        if recent.is_empty() {
            f64::NEG_INFINITY
        } else {
            recent.iter().sum::<f64>() / recent.len() as f64
        }
    }

    pub fn insert(&mut self, ret: f64) -> Placement {
        let index = self.history.len() as u64;
        let admit = ret > self.r_low().max(self.r_bar());
        let placement = if admit {
            if self.positive.len() == self.positive_capacity {
                let low = self.r_low();
                let victim = (0..self.positive.len())
                    .filter(|&i| self.positive[i].0 == low)
                    .min_by_key(|&i| self.positive[i].1)
                    .unwrap();
                self.positive[victim] = (ret, index);
            } else {
                self.positive.push((ret, index));
            }
            Placement::Positive
        } else {
            self.negative.push_back((ret, index));
            if self.negative.len() > self.negative_capacity {
                self.negative.pop_front();
            }
            Placement::Negative
        };
        self.history.push(ret);
        placement
    }
}

/// A trajectory whose rewards sum to `ret`, spread over `len` steps.
pub fn trajectory_with_return(ret: f64, len: usize) -> Trajectory {
    let len = len.max(1);
    (0..len)
        .map(|t| Transition {
            global_state: GlobalState(vec![t as f64, ret]),
            observations: vec![],
            joint_action: JointAction::new(vec![0.5, -0.5]),
            reward: if t == 0 { ret } else { 0.0 },
            next_state: GlobalState(vec![t as f64 + 1.0, ret]),
            next_observations: vec![],
            terminal: t + 1 == len,
        })
        .collect()
}

/// Outcome of replaying one insertion sequence against the oracle.
#[derive(Debug, Default)]
pub struct PcbCheck {
    pub violations: Vec<String>,
}

/// Inserts `returns` (with lengths) into a fresh buffer and an oracle,
/// checking every property after each step.
pub fn check_pcb_sequence(config: PcbConfig, returns: &[(f64, usize)]) -> PcbCheck {
    let mut pcb = DuPcb::new(config).unwrap();
    let mut oracle = PcbOracle::new(config);
    let mut check = PcbCheck::default();
    let mut prev_min = f64::NEG_INFINITY;
    let mut prev_negative: Vec<u64> = Vec::new();
    for (k, &(ret, len)) in returns.iter().enumerate() {
        let threshold = pcb.threshold();
        let got = pcb.insert(&trajectory_with_return(ret, len));
        let want = oracle.insert(ret);
        let mut fail = |msg: String| check.violations.push(format!("step {k}: {msg}"));
        if got != want {
            fail(format!("return {ret} placed {got:?}, rule says {want:?}"));
        }
        if (got == Placement::Positive) != (ret > threshold) {
            fail(format!("return {ret} vs threshold {threshold} placed {got:?}"));
        }
        let stats = pcb.stats();
        if stats.r_low.to_bits() != oracle.r_low().to_bits() {
            fail(format!("r_low {} vs {}", stats.r_low, oracle.r_low()));
        }
        let rb = oracle.r_bar();
        if !(stats.r_bar == rb || (stats.r_bar - rb).abs() <= 1e-12 * rb.abs().max(1.0)) {
            fail(format!("r_bar {} vs {}", stats.r_bar, rb));
        }
        if stats.positive_len != oracle.positive.len() || stats.negative_len != oracle.negative.len() {
            fail(format!(
                "sizes {}/{} vs {}/{}",
                stats.positive_len,
                stats.negative_len,
                oracle.positive.len(),
                oracle.negative.len()
            ));
        }
        // quality monotonicity
        if !pcb.positive().is_empty() {
            if stats.r_low < prev_min {
                fail(format!("positive minimum fell from {prev_min} to {}", stats.r_low));
            }
            prev_min = stats.r_low;
        }
        let snap: Snapshot = pcb.snapshot();
        let mut pos: Vec<(f64, u64)> = snap.positive.iter().map(|e| (e.episodic_return, e.insertion_index)).collect();
        let mut opos = oracle.positive.clone();
        pos.sort_by_key(|p| p.1);
        opos.sort_by_key(|p| p.1);
        if pos != opos {
            fail("positive contents differ".into());
        }
        // FIFO: negative store is the oracle queue, oldest first, and only
        // ever loses its front
        let neg: Vec<u64> = snap.negative.iter().map(|e| e.insertion_index).collect();
        let oneg: Vec<u64> = oracle.negative.iter().map(|p| p.1).collect();
        if neg != oneg {
            fail(format!("negative order {neg:?} vs {oneg:?}"));
        }
        if !neg.windows(2).all(|w| w[0] < w[1]) {
            fail("negative store not in arrival order".into());
        }
        let kept: Vec<u64> = prev_negative.iter().copied().filter(|i| neg.contains(i)).collect();
        let dropped = prev_negative.len() - kept.len();
        if prev_negative[dropped..] != kept[..] {
            fail("negative eviction skipped an older entry".into());
        }
        let lens: usize = snap.positive.iter().map(|e| e.length).sum();
        if pcb.transition_count(Placement::Positive) != lens {
            fail("transition count mismatch".into());
        }
        prev_negative = neg;
    }
    check
}
