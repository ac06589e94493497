use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
n_users = 30
n_routers = 200
days = 2
train_size = 2000
cv_folds = 3
grid_trees = 10,20
grid_depth = 2,3
";

fn wifiprox(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wifiprox"))
        .arg("--config")
        .arg(dir.join("small.conf"))
        .arg("--dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = wifiprox(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn setup(extra: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.conf"), format!("{SMALL}{extra}")).unwrap();
    dir
}

fn full_run(dir: &Path) {
    for stage in ["generate", "clean", "pair", "featurize", "train", "evaluate"] {
        ok(dir, &[stage]);
    }
    ok(dir, &["--featureset", "NEARME", "train"]);
    ok(dir, &["--featureset", "NEARME", "evaluate"]);
    ok(dir, &["report"]);
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn pipeline_is_reproducible() {
    let (a, b) = (setup(""), setup(""));
    full_run(a.path());
    full_run(b.path());
    let (fa, fb) = (files(a.path()), files(b.path()));
    let names: Vec<&str> = fa.iter().map(|f| f.0.as_str()).collect();
    for expected in [
        "wifi.jsonl",
        "bluetooth.jsonl",
        "truth.jsonl",
        "clean.jsonl",
        "homes.jsonl",
        "cleaning.json",
        "candidates.csv",
        "features.csv",
        "model-full-gbt.json",
        "cv-full-gbt.json",
        "eval-full-gbt.json",
        "model-nearme-gbt.json",
        "single_features.json",
        "report.json",
    ] {
        assert!(names.contains(&expected), "missing {expected}");
    }
    assert_eq!(fa.len(), fb.len());
    for ((name, x), (_, y)) in fa.iter().zip(&fb) {
        assert!(x == y, "{name} differs between runs");
    }

    let model: serde_json::Value =
        serde_json::from_slice(&fs::read(a.path().join("model-nearme-gbt.json")).unwrap()).unwrap();
    assert_eq!(
        model["feature_names"],
        serde_json::json!(["overlap", "non_overlap", "spearman", "euclidean"])
    );
    let report: serde_json::Value = serde_json::from_slice(&fs::read(a.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["single_features"].as_array().unwrap().len(), 16);
    assert_eq!(report["featuresets"].as_array().unwrap().len(), 2);

    // A different seed changes the config hash, so stale files are refused.
    let out = wifiprox(a.path(), &["--seed", "2", "report"]);
    assert_eq!(out.status.code(), Some(3));
    let out = wifiprox(a.path(), &["--seed", "2", "featurize"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn exit_codes() {
    let dir = setup("");
    assert_eq!(
        wifiprox(dir.path(), &["--model", "svm", "train"]).status.code(),
        Some(2)
    );
    assert_eq!(wifiprox(dir.path(), &["frobnicate"]).status.code(), Some(2));
    // Nothing generated yet.
    assert_eq!(wifiprox(dir.path(), &["clean"]).status.code(), Some(3));

    let bad = setup("alpha = 2\n");
    assert_eq!(wifiprox(bad.path(), &["generate"]).status.code(), Some(4));
    let unknown = setup("colour = blue\n");
    assert_eq!(wifiprox(unknown.path(), &["config"]).status.code(), Some(4));
}

#[test]
fn config_prints_a_loadable_file() {
    let dir = setup("");
    let out = wifiprox(dir.path(), &["--seed", "9", "config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("seed = 9"));
    assert!(text.contains("n_users = 30"));
    fs::write(dir.path().join("small.conf"), &text).unwrap();
    let again = wifiprox(dir.path(), &["config"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn overfull_world_is_a_config_error() {
    // Later keys override earlier ones.
    let dir = setup("n_routers = 150\n");
    let out = wifiprox(dir.path(), &["generate"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("downtown"));
}
