use pmic_core::harness::{sweep, SummaryTable};
use pmic_core::{EnvKind, ExperimentConfig, Mode};

fn short_bandit() -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(EnvKind::TargetBandit);
    c.max_steps = 400;
    c.warmup_steps = 100;
    c.batch_size = 32;
    c.mi_batch_size = 16;
    c.eval_every = 100;
    c.eval_episodes = 5;
    c
}

#[test]
fn single_seed_has_degenerate_band() {
    let (table, runs) = sweep(&short_bandit(), &[3], &[Mode::Maddpg], None).unwrap();
    assert_eq!(runs.len(), 1);
    let m = table.mode(Mode::Maddpg).unwrap();
    assert!(m.degenerate_band());
    assert_eq!(m.final_means.len(), 1);
    assert!(m.curve.iter().all(|p| p.half_width.is_none()));
}

#[test]
fn repeated_seed_gives_zero_width() {
    let (table, _) = sweep(&short_bandit(), &[5, 5], &[Mode::Pmic], None).unwrap();
    let m = table.mode(Mode::Pmic).unwrap();
    assert_eq!(m.final_means[0].to_bits(), m.final_means[1].to_bits());
    assert_eq!(m.final_half_width, Some(0.0));
}

#[test]
fn summary_ignores_run_order() {
    let (_, mut runs) = sweep(&short_bandit(), &[1, 2], &[Mode::Maddpg, Mode::MinOnly], None).unwrap();
    let forward = SummaryTable::from_records(&runs);
    runs.reverse();
    let backward = SummaryTable::from_records(&runs);
    assert_eq!(forward, backward);
    assert_eq!(forward.to_csv(), backward.to_csv());
}

#[test]
fn sweep_rejects_empty_inputs() {
    assert!(sweep(&short_bandit(), &[], &[Mode::Pmic], None).is_err());
    assert!(sweep(&short_bandit(), &[0], &[], None).is_err());
}
