use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::env::EnvKind;
use crate::error::{Error, Result};

/// Which shaping terms are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Both the lower-bound bonus and the upper-bound penalty.
    Pmic,
    /// No shaping, no estimators.
    Maddpg,
    /// Lower-bound bonus only (`beta` forced to 0).
    MaxOnly,
    /// Upper-bound penalty only (`alpha` forced to 0).
    MinOnly,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Pmic, Mode::Maddpg, Mode::MaxOnly, Mode::MinOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Pmic => "pmic",
            Mode::Maddpg => "maddpg",
            Mode::MaxOnly => "max_only",
            Mode::MinOnly => "min_only",
        }
    }

    pub fn uses_mine(self) -> bool {
        matches!(self, Mode::Pmic | Mode::MaxOnly)
    }

    pub fn uses_club(self) -> bool {
        matches!(self, Mode::Pmic | Mode::MinOnly)
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mode `{s}`")))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything that determines a training run.
///
/// Serialized as flat `key = value` text; see [`ExperimentConfig::to_kv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub mode: Mode,
    pub seed: u64,
    pub max_steps: u64,

    pub alpha: f64,
    pub beta: f64,
    /// Shaped reward is clamped to `[-pmic_clip, pmic_clip]`.
    pub pmic_clip: f64,
    pub gamma: f64,
    pub tau: f64,

    /// Hidden width of actors and critic.
    pub hidden: usize,
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub warmup_steps: u64,
    /// Learner update every this many environment steps.
    pub update_every: u64,

    pub mine_hidden: usize,
    pub mine_embed: usize,
    pub club_hidden: usize,
    pub mine_lr: f64,
    pub club_lr: f64,
    /// Estimator update every this many environment steps.
    pub mi_update_every: u64,
    pub mi_batch_size: usize,
    pub mi_reference_size: usize,

    pub positive_capacity: usize,
    pub negative_capacity: usize,
    /// Recent-return window for the admission mean.
    pub return_window: usize,

    pub noise_start: f64,
    pub noise_end: f64,
    /// Fraction of `max_steps` over which noise anneals linearly.
    pub noise_anneal_fraction: f64,

    /// Evaluate every this many training episodes.
    pub eval_every: u64,
    pub eval_episodes: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::preset(EnvKind::TargetBandit)
    }
}

impl ExperimentConfig {
    pub fn preset(env: EnvKind) -> Self {
        let base = ExperimentConfig {
            env,
            mode: Mode::Pmic,
            seed: 0,
            max_steps: 50_000,
            alpha: 0.001,
            beta: 0.1,
            pmic_clip: 5.0,
            gamma: 0.95,
            tau: 0.001,
            hidden: 64,
            critic_lr: 1e-3,
            actor_lr: 1e-4,
            batch_size: 1024,
            replay_capacity: 1_000_000,
            warmup_steps: 1000,
            update_every: 1,
            mine_hidden: 64,
            mine_embed: 64,
            club_hidden: 32,
            mine_lr: 1e-4,
            club_lr: 1e-4,
            mi_update_every: 1,
            mi_batch_size: 256,
            mi_reference_size: 64,
            positive_capacity: 1000,
            negative_capacity: 1000,
            return_window: 100,
            noise_start: 0.3,
            noise_end: 0.05,
            noise_anneal_fraction: 0.5,
            eval_every: 50,
            eval_episodes: 10,
        };
        match env {
            EnvKind::TargetBandit => ExperimentConfig {
                batch_size: 256,
                update_every: 20,
                mi_update_every: 20,
                ..base
            },
            EnvKind::ParticleRescue => ExperimentConfig {
                max_steps: 200_000,
                critic_lr: 1e-2,
                mine_lr: 1e-3,
                club_lr: 1e-3,
                replay_capacity: 300_000,
                positive_capacity: 6000,
                negative_capacity: 6000,
                batch_size: 256,
                update_every: 20,
                mi_update_every: 20,
                ..base
            },
        }
    }

    /// `(alpha, beta)` after the mode has zeroed the inactive term.
    pub fn effective_weights(&self) -> (f64, f64) {
        let alpha = if self.mode.uses_mine() { self.alpha } else { 0.0 };
        let beta = if self.mode.uses_club() { self.beta } else { 0.0 };
        (alpha, beta)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must be in (0, 1], got {}", self.tau));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) || !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("alpha and beta must be finite and >= 0, got {} / {}", self.alpha, self.beta));
        }
        if self.pmic_clip.is_nan() || self.pmic_clip < 0.0 {
            return bad(format!("pmic_clip must be >= 0, got {}", self.pmic_clip));
        }
        for (name, lr) in [
            ("critic_lr", self.critic_lr),
            ("actor_lr", self.actor_lr),
            ("mine_lr", self.mine_lr),
            ("club_lr", self.club_lr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be positive, got {lr}"));
            }
        }
        for (name, v) in [
            ("hidden", self.hidden),
            ("batch_size", self.batch_size),
            ("replay_capacity", self.replay_capacity),
            ("mine_hidden", self.mine_hidden),
            ("mine_embed", self.mine_embed),
            ("club_hidden", self.club_hidden),
            ("mi_batch_size", self.mi_batch_size),
            ("mi_reference_size", self.mi_reference_size),
            ("positive_capacity", self.positive_capacity),
            ("negative_capacity", self.negative_capacity),
            ("return_window", self.return_window),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.update_every == 0 || self.mi_update_every == 0 || self.eval_every == 0 {
            return bad("update_every, mi_update_every and eval_every must be positive".into());
        }
        if !(self.noise_start >= 0.0 && self.noise_end >= 0.0) {
            return bad("noise scales must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.noise_anneal_fraction) {
            return bad(format!(
                "noise_anneal_fraction must be in [0, 1], got {}",
                self.noise_anneal_fraction
            ));
        }
        Ok(())
    }

    /// Exploration noise scale at a global step.
    pub fn noise_scale(&self, step: u64) -> f64 {
        let horizon = self.noise_anneal_fraction * self.max_steps as f64;
        let progress = if horizon <= 0.0 {
            1.0
        } else {
            (step as f64 / horizon).min(1.0)
        };
        self.noise_start + (self.noise_end - self.noise_start) * progress
    }

    fn as_map(&self) -> BTreeMap<String, Value> {
        match serde_json::to_value(self).expect("config serializes") {
            Value::Object(map) => map.into_iter().collect(),
            _ => unreachable!("config is a struct"),
        }
    }

    /// One `key = value` line per field, sorted by key.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (key, v) in self.as_map() {
            let text = match v {
                Value::String(s) => s,
                other => other.to_string(),
            };
            out.push_str(&format!("{key} = {text}\n"));
        }
        out
    }

    /// Parses `key = value` lines on top of the preset for the file's `env`
    /// (or the default preset). Blank lines and `#` comments are ignored.
    pub fn from_kv(text: &str) -> Result<Self> {
        let pairs = parse_kv(text)?;
        let env = match pairs.iter().find(|(k, _)| k == "env") {
            Some((_, v)) => v.parse()?,
            None => EnvKind::TargetBandit,
        };
        let mut config = ExperimentConfig::preset(env);
        for (k, v) in &pairs {
            config.set(k, v)?;
        }
        Ok(config)
    }

    /// Overrides one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut map = self.as_map();
        let slot = map
            .get_mut(key)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown config key `{key}`")))?;
        *slot = match slot {
            Value::String(_) => Value::String(value.to_string()),
            _ => serde_json::from_str(value).map_err(|_| {
                Error::InvalidConfig(format!("bad value `{value}` for `{key}`"))
            })?,
        };
        let object: serde_json::Map<String, Value> = map.into_iter().collect();
        *self = serde_json::from_value(Value::Object(object))
            .map_err(|e| Error::InvalidConfig(format!("bad value `{value}` for `{key}`: {e}")))?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical `key = value` text, truncated to 16 chars.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_kv().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
