use std::path::Path;
use std::process::Command;

fn pmic() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pmic"))
}

fn run_dir(out: &Path) -> std::path::PathBuf {
    let mut dirs: Vec<_> = std::fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.pop().unwrap()
}

const SMALL: [&str; 12] = [
    "--set", "warmup_steps=32",
    "--set", "batch_size=16",
    "--set", "hidden=8",
    "--set", "mine_hidden=8",
    "--set", "mine_embed=4",
    "--set", "club_hidden=4",
];

#[test]
fn zero_steps_writes_headers_only() {
    let out = tempfile::tempdir().unwrap();
    let status = pmic()
        .args(["run", "--max-steps", "0", "--out-dir"])
        .arg(out.path())
        .status()
        .unwrap();
    assert!(status.success());
    let dir = run_dir(out.path());
    let episodes = std::fs::read_to_string(dir.join("episodes.csv")).unwrap();
    assert_eq!(episodes.lines().count(), 1);
    assert!(episodes.starts_with("episode,step,episodic_return"));
    let mi = std::fs::read_to_string(dir.join("mi.csv")).unwrap();
    assert_eq!(mi.trim(), "step,loss_mine,loss_club,mine_estimate,club_estimate");
}

#[test]
fn same_seed_same_bytes() {
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let out = tempfile::tempdir().unwrap();
        let status = pmic()
            .args(["run", "--mode", "pmic", "--alpha", "0.5", "--beta", "0.5", "--seed", "3", "--max-steps", "300"])
            .args(SMALL)
            .arg("--out-dir")
            .arg(out.path())
            .status()
            .unwrap();
        assert!(status.success());
        let dir = run_dir(out.path());
        let read = |f: &str| std::fs::read(dir.join(f)).unwrap();
        outputs.push((read("episodes.csv"), read("eval.csv"), read("mi.csv")));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert!(outputs[0].0.len() > 1000);
}

#[test]
fn sweep_writes_summary() {
    let out = tempfile::tempdir().unwrap();
    let output = pmic()
        .args(["sweep", "--seeds", "0,1", "--modes", "maddpg,max_only", "--max-steps", "200"])
        .args(SMALL)
        .arg("--out-dir")
        .arg(out.path())
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let csv = std::fs::read_to_string(out.path().join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(1).unwrap().starts_with("maddpg,2,"));
    let json: String = std::fs::read_to_string(out.path().join("summary.json")).unwrap();
    assert!(json.contains("\"max_only\""));
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.cfg");
    std::fs::write(&path, "env = particle_rescue\nbeta = 0.25\n").unwrap();
    let output = pmic()
        .args(["config", "--config"])
        .arg(&path)
        .args(["--alpha", "0.5", "--set", "tau=0.01"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    for line in ["env = particle_rescue", "beta = 0.25", "alpha = 0.5", "tau = 0.01", "critic_lr = 0.01"] {
        assert!(text.lines().any(|l| l == line), "missing `{line}` in\n{text}");
    }
}

#[test]
fn invalid_input_exits_nonzero() {
    for args in [
        vec!["run", "--mode", "greedy"],
        vec!["run", "--set", "gamma=1.5"],
        vec!["run", "--set", "no_such_key=1"],
        vec!["sweep", "--seeds", "5..5"],
    ] {
        let status = pmic().args(&args).status().unwrap();
        assert!(!status.success(), "{args:?}");
    }
}
