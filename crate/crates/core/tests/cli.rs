use std::path::Path;
use std::process::{Command, Output};

use pvo_core::expert::load_demos;
use pvo_core::harness::load_values;

fn pvo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pvo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small(out: &Path) -> Vec<String> {
    [
        "--canvas", "6", "--train-sizes", "4", "5", "--eval-size", "6", "--rl-size", "5",
        "--demo-count", "8", "--output-dir",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([out.display().to_string()])
    .collect()
}

fn with<'a>(head: &[&'a str], tail: &'a [String]) -> Vec<&'a str> {
    head.iter().copied().chain(tail.iter().map(String::as_str)).collect()
}

#[test]
fn demos_then_values_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let common = small(dir.path());
    let demos = dir.path().join("d.jsonl");
    let snap = dir.path().join("v.json");
    let d = demos.to_str().unwrap();
    let s = snap.to_str().unwrap();

    let out = pvo(&with(&["gen-demos", "--seed", "3", "--out", d], &common));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(load_demos(&demos).unwrap().len(), 8);

    let args = with(
        &["train-values", "--seed", "1", "--backend", "tabular", "--epochs", "2", "--demos", d, "--out", s],
        &common,
    );
    let out = pvo(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, meta) = load_values::<f64>(&snap).unwrap();
    assert_eq!(meta.seed, 1);
    assert_eq!(meta.backend, "tabular");
}

#[test]
fn training_commands_require_a_seed() {
    for cmd in ["gen-demos", "train-values", "heatmap", "train-agent", "compare"] {
        let out = pvo(&[cmd]);
        assert_eq!(out.status.code(), Some(2), "{cmd}");
    }
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "no_such_field = 1\n").unwrap();
    let out = pvo(&["gen-demos", "--seed", "0", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let yaml = dir.path().join("c.yaml");
    std::fs::write(&yaml, "seed: 1\n").unwrap();
    let out = pvo(&["gen-demos", "--seed", "0", "--config", yaml.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let out = pvo(&["gen-demos", "--seed", "0", "--eval-size", "40"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn json_config_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let body = format!(
        r#"{{"canvas": 6, "train_sizes": [4, 5], "eval_size": 6, "demo_count": 3,
            "rl": {{"size": 5}}, "output_dir": {:?}}}"#,
        dir.path().display().to_string()
    );
    std::fs::write(&cfg, body).unwrap();
    let out = pvo(&["gen-demos", "--seed", "0", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(load_demos(dir.path().join("demos.jsonl")).unwrap().len(), 3);
}

#[test]
fn value_modes_need_a_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let common = small(dir.path());
    let out = pvo(&with(&["train-agent", "--seed", "0", "--mode", "pvo_value"], &common));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_agent_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let common = small(dir.path());
    let csv = dir.path().join("m.csv");
    let args = with(
        &["train-agent", "--seed", "4", "--max-steps", "2000", "--out", csv.to_str().unwrap()],
        &common,
    );
    let out = pvo(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("env_steps,"));
    assert!(text.lines().count() > 1);
}

#[test]
fn verify_passes() {
    let out = pvo(&["verify", "--seed", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 5);
}
