use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pmic_core::harness::{run, sweep, FINAL_EVAL_EPISODES};
use pmic_core::{EnvKind, ExperimentConfig, Mode};

#[derive(Parser)]
#[command(name = "pmic", version, about = "Train and sweep mutual-information-shaped MADDPG")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one (config, seed) run.
    Run(Overrides),
    /// Run every (mode, seed) pair and write a summary.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// Seeds as a list (`0,1,2`) or half-open range (`0..10`).
        #[arg(long, default_value = "0..10")]
        seeds: String,
        /// Comma-separated modes.
        #[arg(long, default_value = "pmic,max_only,min_only,maddpg")]
        modes: String,
    },
    /// Print the resolved configuration as key = value text.
    Config(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// key = value file; fields it omits come from the environment preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<EnvKind>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_steps: Option<u64>,
    /// Any other field, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Where run directories and summaries go.
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let mut c = ExperimentConfig::from_kv(&text)?;
                if let Some(env) = self.env {
                    c.env = env;
                }
                c
            }
            None => ExperimentConfig::preset(self.env.unwrap_or(EnvKind::TargetBandit)),
        };
        if let Some(m) = self.mode {
            c.mode = m;
        }
        if let Some(a) = self.alpha {
            c.alpha = a;
        }
        if let Some(b) = self.beta {
            c.beta = b;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(n) = self.max_steps {
            c.max_steps = n;
        }
        for kv in &self.set {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("--set expects key=value, got `{kv}`");
            };
            c.set(k.trim(), v.trim())?;
        }
        c.validate()?;
        Ok(c)
    }
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a >= b {
            bail!("empty seed range `{text}`");
        }
        return Ok((a..b).collect());
    }
    let seeds = text
        .split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed `{s}`")))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        bail!("no seeds given");
    }
    Ok(seeds)
}

fn parse_modes(text: &str) -> Result<Vec<Mode>> {
    text.split(',')
        .map(|s| s.trim().parse::<Mode>().map_err(Into::into))
        .collect()
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// `Ok(false)` means at least one run failed.
fn real_main() -> Result<bool> {
    match Cli::parse().command {
        Command::Config(o) => {
            print!("{}", o.resolve()?.to_kv());
            Ok(true)
        }
        Command::Run(o) => {
            let c = o.resolve()?;
            let r = run(&c, Some(&o.out_dir))?;
            let dir = o.out_dir.join(r.dir_name());
            println!(
                "{} {} seed {}: {} episodes, final mean return {}, {:.1}s -> {}",
                c.env,
                c.mode,
                c.seed,
                r.episodes.len(),
                r.final_mean_return(FINAL_EVAL_EPISODES)
                    .map_or("n/a".to_string(), |v| format!("{v:.3}")),
                r.wall_clock_secs,
                dir.display()
            );
            if let Some(msg) = &r.failed {
                eprintln!("run failed: {msg}");
                return Ok(false);
            }
            Ok(true)
        }
        Command::Sweep {
            overrides,
            seeds,
            modes,
        } => {
            let base = overrides.resolve()?;
            let seeds = parse_seeds(&seeds)?;
            let modes = parse_modes(&modes)?;
            let (table, _) = sweep(&base, &seeds, &modes, Some(&overrides.out_dir))?;
            print!("{}", table.to_csv());
            Ok(!table.any_failed())
        }
    }
}
