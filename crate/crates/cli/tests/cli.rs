use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_latent-throw");

/// Small enough to run in seconds.
const TINY: &str = r#"{
  "dataset": {"target_count": 60, "min_per_bin": 1, "shards": 2, "candidates_per_shard": 4000},
  "train": {"epochs": 2, "batch_size": 16, "hidden": [16, 16], "checkpoint_every": 1},
  "cmaes": {"population": 8, "max_generations": 3},
  "planner": {"direct_max_generations": 3, "eval_samples": 20}
}"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("tiny.json");
    if !cfg.exists() {
        fs::create_dir_all(dir).unwrap();
        fs::write(&cfg, TINY).unwrap();
    }
    Command::new(BIN)
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn pipeline(dir: &Path) {
    ok(dir, &["--seed", "3", "gen-data", "--csv"]);
    ok(dir, &["--seed", "3", "train"]);
    ok(dir, &["--seed", "3", "eval"]);
    ok(dir, &["--seed", "3", "plan", "--objective", "l1", "--target", "1.0"]);
    ok(dir, &["--seed", "3", "plan-direct", "--target", "1.0"]);
    ok(dir, &["render", "--trajectory", "plan_latent_l1_trajectory.csv", "--output", "again.svg"]);
}

#[test]
fn pipeline_is_reproducible_and_writes_manifests() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path());
    pipeline(b.path());
    let mut compared = 0;
    for entry in fs::read_dir(a.path()).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        if name.starts_with("timing_") || name == "tiny.json" {
            continue;
        }
        let x = fs::read(a.path().join(&name)).unwrap();
        let y = fs::read(b.path().join(&name)).unwrap();
        assert!(x == y, "{name} differs between runs");
        compared += 1;
    }
    assert!(compared >= 15, "only {compared} artifacts");
    for cmd in ["gen-data", "train", "eval", "plan", "plan-direct", "render"] {
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(a.path().join(format!("manifest_{cmd}.json"))).unwrap()).unwrap();
        assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
        assert!(!m["outputs"].as_array().unwrap().is_empty());
        assert!(a.path().join(format!("timing_{cmd}.json")).exists());
    }
    // The rendered file from the CSV equals the one written by the planner.
    assert_eq!(
        fs::read(a.path().join("again.svg")).unwrap(),
        fs::read(a.path().join("plan_latent_l1.svg")).unwrap()
    );
    let csv = fs::read_to_string(a.path().join("dataset.csv")).unwrap();
    assert!(csv.starts_with("th1,th2,th3,w00,"));
}

#[test]
fn resumed_training_matches_uninterrupted_training() {
    let full = tempfile::tempdir().unwrap();
    ok(full.path(), &["gen-data"]);
    ok(full.path(), &["train"]);

    let split = tempfile::tempdir().unwrap();
    fs::copy(full.path().join("dataset.ltds"), split.path().join("dataset.ltds")).unwrap();
    let one_epoch = TINY.replace(r#""epochs": 2"#, r#""epochs": 1"#);
    fs::write(split.path().join("one.json"), one_epoch).unwrap();
    let first = Command::new(BIN)
        .arg("--config")
        .arg(split.path().join("one.json"))
        .arg("--out-dir")
        .arg(split.path())
        .args(["train", "--checkpoint", "half.ltgc"])
        .output()
        .unwrap();
    assert!(first.status.success());
    ok(split.path(), &["train", "--resume", "half.ltgc"]);
    assert_eq!(
        fs::read(full.path().join("checkpoint.ltgc")).unwrap(),
        fs::read(split.path().join("checkpoint.ltgc")).unwrap()
    );
    assert_eq!(
        fs::read(full.path().join("loss_history.csv")).unwrap(),
        fs::read(split.path().join("loss_history.csv")).unwrap()
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    fs::write(d.join("bad.json"), r#"{"colour": 1}"#).unwrap();
    let out = Command::new(BIN).arg("--config").arg(d.join("bad.json")).arg("basis").output().unwrap();
    assert_eq!(code(&out), 2);
    assert_eq!(code(&run(d, &["plan-direct", "--target", "2.5"])), 2);

    fs::write(d.join("bad.csv"), "t,x\n1,2\n").unwrap();
    assert_eq!(code(&run(d, &["render", "--trajectory", "bad.csv"])), 7);

    fs::write(d.join("broken.ltgc"), b"LTGC\x01\x00\x00\x00garbage").unwrap();
    assert_eq!(code(&run(d, &["eval", "--checkpoint", "broken.ltgc"])), 5);

    // Three generations do not reach zero; only --strict turns that into an error.
    assert_eq!(code(&run(d, &["plan-direct"])), 0);
    assert_eq!(code(&run(d, &["--strict", "plan-direct"])), 6);
    let plan: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("plan_direct.json")).unwrap()).unwrap();
    assert_eq!(plan["converged"], serde_json::Value::Bool(false));

    fs::write(d.join("starved.json"), r#"{"dataset": {"min_acceptance": 0.9, "probe_window": 100, "shards": 1, "candidates_per_shard": 200}}"#).unwrap();
    let out = Command::new(BIN)
        .arg("--config")
        .arg(d.join("starved.json"))
        .arg("--out-dir")
        .arg(d)
        .arg("gen-data")
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
}

#[test]
fn checkpoint_from_other_primitives_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-data"]);
    ok(d, &["train"]);
    let wider = TINY.replace(r#""dataset": {"#, r#""dataset": {"distance_range": [0.8, 1.6], "#);
    fs::write(d.join("wider.json"), wider).unwrap();
    let out = Command::new(BIN)
        .arg("--config")
        .arg(d.join("wider.json"))
        .arg("--out-dir")
        .arg(d)
        .arg("eval")
        .output()
        .unwrap();
    assert_eq!(code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn basis_csv_has_one_column_per_primitive() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["basis"]);
    let csv = fs::read_to_string(dir.path().join("basis.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 11);
    assert_eq!(csv.lines().count(), 102);
}
