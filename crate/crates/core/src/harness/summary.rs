use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{run, JointBehavior, RunRecord, FINAL_EVAL_EPISODES};
use crate::error::{Error, Result};
use crate::maddpg::{ExperimentConfig, Mode};

/// Fractions of pooled final-window evaluation episodes per label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BehaviorFrequencies {
    pub optimal: f64,
    pub suboptimal_deer: f64,
    pub suboptimal_cat: f64,
    pub uncoordinated: f64,
}

impl BehaviorFrequencies {
    pub fn from_labels(labels: &[JointBehavior]) -> Self {
        if labels.is_empty() {
            return Self::default();
        }
        let n = labels.len() as f64;
        let frac = |b| labels.iter().filter(|x| **x == b).count() as f64 / n;
        BehaviorFrequencies {
            optimal: frac(JointBehavior::Optimal),
            suboptimal_deer: frac(JointBehavior::SuboptimalDeer),
            suboptimal_cat: frac(JointBehavior::SuboptimalCat),
            uncoordinated: frac(JointBehavior::Uncoordinated),
        }
    }

    pub fn total(&self) -> f64 {
        self.optimal + self.suboptimal_deer + self.suboptimal_cat + self.uncoordinated
    }
}

/// Mean over seeds at one evaluation point, with a 95% band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub mean: f64,
    /// `None` when fewer than two seeds contribute.
    pub half_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: Mode,
    /// Seeds in ascending order; the per-seed vectors follow this order.
    pub seeds: Vec<u64>,
    pub final_means: Vec<f64>,
    pub converged: Vec<Option<JointBehavior>>,
    pub failed: Vec<bool>,
    pub final_mean: f64,
    /// Student-t 95% half width over seeds; `None` for a single seed.
    pub final_half_width: Option<f64>,
    pub curve: Vec<CurvePoint>,
    pub behavior: BehaviorFrequencies,
}

impl ModeSummary {
    pub fn degenerate_band(&self) -> bool {
        self.final_half_width.is_none()
    }

    /// Seeds whose final window settled on deer/deer or cat/cat.
    pub fn suboptimal_seeds(&self) -> usize {
        self.converged
            .iter()
            .filter(|b| b.is_some_and(JointBehavior::is_suboptimal))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub modes: Vec<ModeSummary>,
}

/// Mean and 95% half width; the width is `None` below two samples.
pub fn mean_ci(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    (mean, Some(t * (var / n as f64).sqrt()))
}

impl SummaryTable {
    /// Aggregates run records per mode. Records are ordered by seed first,
    /// so the result does not depend on the order runs are supplied in.
    pub fn from_records(records: &[RunRecord]) -> Self {
        let mut modes: Vec<Mode> = records.iter().map(|r| r.mode).collect();
        modes.sort_by_key(|m| Mode::ALL.iter().position(|x| x == m));
        modes.dedup();
        let modes = modes
            .into_iter()
            .map(|mode| {
                let mut runs: Vec<&RunRecord> = records.iter().filter(|r| r.mode == mode).collect();
                runs.sort_by(|a, b| a.seed.cmp(&b.seed).then(a.config_hash.cmp(&b.config_hash)));
                summarize(mode, &runs)
            })
            .collect();
        SummaryTable { modes }
    }

    pub fn mode(&self, mode: Mode) -> Option<&ModeSummary> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    pub fn any_failed(&self) -> bool {
        self.modes.iter().any(|m| m.failed.iter().any(|f| *f))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "mode,seeds,final_mean,ci_low,ci_high,optimal,suboptimal_deer,suboptimal_cat,uncoordinated,suboptimal_seeds,failed_runs\n",
        );
        for m in &self.modes {
            let (lo, hi) = match m.final_half_width {
                Some(h) => ((m.final_mean - h).to_string(), (m.final_mean + h).to_string()),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                m.mode,
                m.seeds.len(),
                m.final_mean,
                lo,
                hi,
                m.behavior.optimal,
                m.behavior.suboptimal_deer,
                m.behavior.suboptimal_cat,
                m.behavior.uncoordinated,
                m.suboptimal_seeds(),
                m.failed.iter().filter(|f| **f).count()
            );
        }
        s
    }

    pub fn curves_csv(&self) -> String {
        let mut s = String::from("mode,step,mean,ci_low,ci_high\n");
        for m in &self.modes {
            for p in &m.curve {
                let (lo, hi) = match p.half_width {
                    Some(h) => ((p.mean - h).to_string(), (p.mean + h).to_string()),
                    None => (String::new(), String::new()),
                };
                let _ = writeln!(s, "{},{},{},{},{}", m.mode, p.step, p.mean, lo, hi);
            }
        }
        s
    }

    /// Writes `summary.csv`, `curves.csv` and `summary.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.csv"), self.to_csv())?;
        std::fs::write(dir.join("curves.csv"), self.curves_csv())?;
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

fn summarize(mode: Mode, runs: &[&RunRecord]) -> ModeSummary {
    let final_means: Vec<f64> = runs
        .iter()
        .map(|r| r.final_mean_return(FINAL_EVAL_EPISODES).unwrap_or(f64::NAN))
        .collect();
    let finite: Vec<f64> = final_means.iter().copied().filter(|v| v.is_finite()).collect();
    let (final_mean, final_half_width) = mean_ci(&finite);

    let points = runs.iter().map(|r| r.evals.len()).min().unwrap_or(0);
    let curve = (0..points)
        .map(|i| {
            let vals: Vec<f64> = runs.iter().map(|r| r.evals[i].mean_return).collect();
            let (mean, half_width) = mean_ci(&vals);
            CurvePoint {
                step: runs[0].evals[i].step,
                mean,
                half_width,
            }
        })
        .collect();

    let pooled: Vec<JointBehavior> = runs
        .iter()
        .flat_map(|r| r.final_eval(FINAL_EVAL_EPISODES).1)
        .collect();
    ModeSummary {
        mode,
        seeds: runs.iter().map(|r| r.seed).collect(),
        final_means,
        converged: runs.iter().map(|r| r.converged_behavior(FINAL_EVAL_EPISODES)).collect(),
        failed: runs.iter().map(|r| r.is_failed()).collect(),
        final_mean,
        final_half_width,
        curve,
        behavior: BehaviorFrequencies::from_labels(&pooled),
    }
}

/// Runs every `(mode, seed)` pair on top of `base` and aggregates.
pub fn sweep(
    base: &ExperimentConfig,
    seeds: &[u64],
    modes: &[Mode],
    out_dir: Option<&Path>,
) -> Result<(SummaryTable, Vec<RunRecord>)> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("a sweep needs at least one seed".into()));
    }
    if modes.is_empty() {
        return Err(Error::InvalidConfig("a sweep needs at least one mode".into()));
    }
    let mut records = Vec::with_capacity(seeds.len() * modes.len());
    for &mode in modes {
        for &seed in seeds {
            let mut c = base.clone();
            c.mode = mode;
            c.seed = seed;
            records.push(run(&c, out_dir)?);
        }
    }
    let table = SummaryTable::from_records(&records);
    if let Some(dir) = out_dir {
        table.write_dir(dir)?;
    }
    Ok((table, records))
}
