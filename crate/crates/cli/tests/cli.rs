use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gcnssl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcnssl"))
        .current_dir(dir)
        .env_remove("GCNSSL_DATA")
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("spawn gcnssl")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = gcnssl(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synthesize", "--out", "ds", "--seed", "3"]);
    dir
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SHORT_PRETRAIN: &[&str] = &["--pretrain-epochs", "15", "--fixed-epochs"];

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&gcnssl(dir.path(), &["train", "--out", "x"])), 2);
    assert_eq!(code(&gcnssl(dir.path(), &["train", "--data", "missing", "--out", "x"])), 2);
    assert_eq!(code(&gcnssl(dir.path(), &["nonsense"])), 2);
    assert_eq!(code(&gcnssl(dir.path(), &["train", "--dropout", "abc"])), 2);
}

#[test]
fn bad_snapshot_exit_2() {
    let dir = workspace();
    std::fs::write(dir.path().join("bad.json"), "{\"not\": \"a snapshot\"}").unwrap();
    let out = gcnssl(dir.path(), &["train", "--data", "ds", "--init", "bad.json", "--out", "t"]);
    assert_eq!(code(&out), 2);
    let out = gcnssl(dir.path(), &["export", "--data", "ds", "--snapshot", "nope.json", "--out", "e.tsv"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn invalid_config_exit_2() {
    let dir = workspace();
    std::fs::write(dir.path().join("cfg.json"), "{\"epochs\": 10, \"hiden\": 4}").unwrap();
    let out = gcnssl(dir.path(), &["train", "--data", "ds", "--config", "cfg.json", "--out", "t"]);
    assert_eq!(code(&out), 2);
    let out = gcnssl(dir.path(), &["train", "--data", "ds", "--dropout", "1.5", "--out", "t"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn data_resolved_under_root() {
    let dir = workspace();
    let out = Command::new(env!("CARGO_BIN_EXE_gcnssl"))
        .current_dir(dir.path())
        .env("GCNSSL_DATA", dir.path())
        .env("RUST_LOG", "warn")
        .args(["train", "--data", "ds", "--epochs", "5", "--patience", "5", "--out", "t"])
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn pretrain_then_train_writes_metrics() {
    let dir = workspace();
    let mut args = vec!["pretrain", "--data", "ds", "--out", "pre.json", "--log", "log.json"];
    args.extend_from_slice(SHORT_PRETRAIN);
    ok(dir.path(), &args);
    let log = json(&dir.path().join("log.json"));
    assert_eq!(log["history"].as_array().unwrap().len(), 15);

    ok(
        dir.path(),
        &["train", "--data", "ds", "--init", "pre.json", "--epochs", "60", "--out", "run"],
    );
    let m = json(&dir.path().join("run/metrics.json"));
    assert_eq!(m["init"], "pretrained");
    assert_eq!(m["transfer"]["transferred"][0], "theta1");
    for key in ["train", "val", "test"] {
        let acc = m["accuracies"][key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
    assert_eq!(m["fingerprint"].as_str().unwrap().len(), 16);
    assert!(dir.path().join("run/model.json").exists());

    ok(dir.path(), &["train", "--data", "ds", "--epochs", "60", "--out", "base"]);
    let m = json(&dir.path().join("base/metrics.json"));
    assert!(m["init"].is_null());
}

#[test]
fn same_seed_same_bytes() {
    let dir = workspace();
    for name in ["a.json", "b.json"] {
        let mut args = vec!["pretrain", "--data", "ds", "--seed", "5", "--out", name];
        args.extend_from_slice(SHORT_PRETRAIN);
        ok(dir.path(), &args);
    }
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    let b = std::fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);

    for out in ["r1.json", "r2.json"] {
        ok(
            dir.path(),
            &["experiment", "--data", "ds", "--runs", "3", "--jobs", "2", "--epochs", "40", "--out", out],
        );
    }
    assert_eq!(
        std::fs::read(dir.path().join("r1.json")).unwrap(),
        std::fs::read(dir.path().join("r2.json")).unwrap()
    );
}

#[test]
fn experiment_against_baseline() {
    let dir = workspace();
    ok(
        dir.path(),
        &["experiment", "--data", "ds", "--runs", "3", "--epochs", "40", "--out", "base.json"],
    );
    let mut args = vec![
        "experiment", "--data", "ds", "--runs", "3", "--epochs", "40", "--strategy", "rcf",
        "--cover", "0.3", "--baseline", "base.json", "--out", "ssl.json",
    ];
    args.extend_from_slice(SHORT_PRETRAIN);
    ok(dir.path(), &args);
    let r = json(&dir.path().join("ssl.json"));
    assert_eq!(r["label"], "RCF 30%");
    assert_eq!(r["accuracies"].as_array().unwrap().len(), 3);
    let compared = !r["comparison"].is_null() || !r["comparison_error"].is_null();
    assert!(compared);
}

#[test]
fn export_one_row_per_node() {
    let dir = workspace();
    let mut args = vec!["pretrain", "--data", "ds", "--out", "pre.json", "--hidden", "8"];
    args.extend_from_slice(SHORT_PRETRAIN);
    ok(dir.path(), &args);
    ok(dir.path(), &["export", "--data", "ds", "--snapshot", "pre.json", "--out", "emb.tsv"]);
    let text = std::fs::read_to_string(dir.path().join("emb.tsv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 121);
    assert!(lines.iter().all(|l| l.split('\t').count() == 10));
}

#[test]
fn sweep_reports_every_cell() {
    let dir = workspace();
    let mut args = vec![
        "sweep", "--data", "ds", "--runs", "2", "--epochs", "20", "--percentages", "0.1,0.4",
        "--strategies", "rrl,both", "--out", "sweep.json",
    ];
    args.extend_from_slice(SHORT_PRETRAIN);
    let out = ok(dir.path(), &args);
    let r = json(&dir.path().join("sweep.json"));
    assert_eq!(r["cells"].as_array().unwrap().len(), 4);
    let table = std::fs::read_to_string(dir.path().join("sweep.txt")).unwrap();
    assert!(table.contains("Without SSL") && table.contains("RRL&RCF"));
    assert_eq!(String::from_utf8(out.stdout).unwrap(), table);
}

#[test]
fn validate_needs_known_reference() {
    let dir = workspace();
    assert_eq!(code(&gcnssl(dir.path(), &["validate", "--data", "ds"])), 2);
    let out = gcnssl(dir.path(), &["validate", "--data", "ds", "--reference", "cora"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("MISMATCH"));
}
