//! End-to-end checks of the `predecomp` binary: exit codes, file outputs,
//! and determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_predecomp")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("predecomp-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Three-specimen dataset whose depth-1 fit has known attributions.
fn write_three_specimens(path: &Path) {
    std::fs::write(path, "x1,x2,y\n0,0,0\n0,1,1\n1,0,-1\n").unwrap();
}

fn train_tiny(dir: &Path, extra: &[&str]) -> PathBuf {
    let data = dir.join("train.csv");
    write_three_specimens(&data);
    let model = dir.join("model.json");
    let mut args = vec![
        "train",
        "--data",
        data.to_str().unwrap(),
        "--task",
        "regression",
        "--eta",
        "1",
        "--max_depth",
        "1",
        "--num_boost_round",
        "1",
        "--model-out",
        model.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    model
}

#[test]
fn help_lists_hyperparameter_names_verbatim() {
    let out = run(&["train", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--eta",
        "--max_depth",
        "--min_child_weight",
        "--num_boost_round",
        "--reg_lambda",
    ] {
        assert!(text.contains(flag), "missing {flag} in help:\n{text}");
    }
}

#[test]
fn train_is_deterministic_across_runs() {
    let dir = tmp_dir("train-determinism");
    let a = train_tiny(&dir, &["--seed", "5"]);
    let first = std::fs::read(&a).unwrap();
    let b = train_tiny(&dir, &["--seed", "5"]);
    let second = std::fs::read(&b).unwrap();
    assert_eq!(first, second);
}

#[test]
fn zero_boost_rounds_exits_2() {
    let dir = tmp_dir("zero-rounds");
    let data = dir.join("train.csv");
    write_three_specimens(&data);
    let out = run(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--task",
        "regression",
        "--num_boost_round",
        "0",
        "--model-out",
        dir.join("m.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_data_file_exits_3() {
    let dir = tmp_dir("missing-file");
    let out = run(&[
        "train",
        "--data",
        dir.join("nope.csv").to_str().unwrap(),
        "--task",
        "regression",
        "--model-out",
        dir.join("m.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_label_column_exits_4() {
    let dir = tmp_dir("bad-label");
    let data = dir.join("train.csv");
    write_three_specimens(&data);
    let out = run(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--label-column",
        "target",
        "--task",
        "regression",
        "--model-out",
        dir.join("m.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn verify_fresh_model_passes() {
    let dir = tmp_dir("verify-pass");
    let model = train_tiny(&dir, &[]);
    let out = run(&[
        "verify",
        "--model",
        model.to_str().unwrap(),
        "--train-data",
        dir.join("train.csv").to_str().unwrap(),
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("verification: PASS"));
    assert!(text.contains("identity max"));
}

#[test]
fn verify_lambda_zero_reports_zero_sum() {
    let dir = tmp_dir("verify-zero-sum");
    let model = train_tiny(&dir, &["--reg_lambda", "0"]);
    let out = run(&[
        "verify",
        "--model",
        model.to_str().unwrap(),
        "--train-data",
        dir.join("train.csv").to_str().unwrap(),
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("zero-sum"));
}

#[test]
fn verify_against_wrong_dataset_exits_4() {
    let dir = tmp_dir("verify-wrong-data");
    let model = train_tiny(&dir, &[]);
    let other = dir.join("other.csv");
    std::fs::write(&other, "x1,x2,y\n0,0,0\n1,1,1\n").unwrap();
    let out = run(&[
        "verify",
        "--model",
        model.to_str().unwrap(),
        "--train-data",
        other.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn gfa_tree_inner_reproduces_hand_value() {
    let dir = tmp_dir("gfa-tree-inner");
    let model = train_tiny(&dir, &[]);
    let out_csv = dir.join("gfa.csv");
    let out = run(&[
        "gfa",
        "--model",
        model.to_str().unwrap(),
        "--data",
        dir.join("train.csv").to_str().unwrap(),
        "--family",
        "tree_inner",
        "--ifa",
        "predecomp",
        "--domain-tag",
        "train",
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&out_csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "feature,score,family,ifa,domain");
    let x1: Vec<&str> = lines.next().unwrap().split(',').collect();
    let score: f64 = x1[1].parse().unwrap();
    assert!((score - 5.0 / 6.0).abs() < 1e-12, "score {score}");
}

#[test]
fn gfa_abs_reproduces_hand_value() {
    let dir = tmp_dir("gfa-abs");
    let model = train_tiny(&dir, &[]);
    let out_csv = dir.join("abs.csv");
    let out = run(&[
        "gfa",
        "--model",
        model.to_str().unwrap(),
        "--data",
        dir.join("train.csv").to_str().unwrap(),
        "--family",
        "abs",
        "--domain-tag",
        "train",
        "--out",
        out_csv.to_str().unwrap(),
        "--json",
        dir.join("abs.json").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&out_csv).unwrap();
    let x1: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let score: f64 = x1[1].parse().unwrap();
    assert!((score - 7.0 / 18.0).abs() < 1e-12, "score {score}");
    assert!(dir.join("abs.json").exists());
}

#[test]
fn gfa_zero_labels_give_zero_scores() {
    let dir = tmp_dir("gfa-zero");
    let model = train_tiny(&dir, &[]);
    let zeros = dir.join("zeros.csv");
    std::fs::write(&zeros, "x1,x2,y\n0,0,0\n0,1,0\n1,0,0\n").unwrap();
    let out_csv = dir.join("gfa.csv");
    let out = run(&[
        "gfa",
        "--model",
        model.to_str().unwrap(),
        "--data",
        zeros.to_str().unwrap(),
        "--family",
        "tree_inner",
        "--domain-tag",
        "valid",
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    for line in std::fs::read_to_string(&out_csv).unwrap().lines().skip(1) {
        let score: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(score, 0.0);
    }
}

#[test]
fn attribute_writes_three_files() {
    let dir = tmp_dir("attribute");
    let model = train_tiny(&dir, &[]);
    let out_dir = dir.join("attr");
    let out = run(&[
        "attribute",
        "--model",
        model.to_str().unwrap(),
        "--data",
        dir.join("train.csv").to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let contributions = std::fs::read_to_string(out_dir.join("contributions.csv")).unwrap();
    assert!(contributions.starts_with("tree,sample_index,feature,contribution"));
    // specimen A's x1 contribution is 1/3
    assert!(contributions.contains("0,0,x1,0.3333333333333333"));
    let bias: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("bias.json")).unwrap()).unwrap();
    assert_eq!(bias["bias"].as_array().unwrap().len(), 1);
    let forest = std::fs::read_to_string(out_dir.join("forest.csv")).unwrap();
    assert_eq!(forest.lines().count(), 4); // header + 3 samples
}

#[test]
fn datagen_is_deterministic_and_writes_truth() {
    let dir = tmp_dir("datagen");
    for sub in ["a", "b"] {
        let out = run(&[
            "datagen",
            "--task",
            "classification",
            "--n-train",
            "30",
            "--n-valid",
            "10",
            "--seed",
            "9",
            "--out-dir",
            dir.join(sub).to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    let a = std::fs::read(dir.join("a/train.csv")).unwrap();
    let b = std::fs::read(dir.join("b/train.csv")).unwrap();
    assert_eq!(a, b);
    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("a/truth.json")).unwrap()).unwrap();
    assert_eq!(truth["relevant"].as_array().unwrap().len(), 5);
    assert_eq!(truth["task"], "classification");
}

#[test]
fn experiment_smoke_emits_all_series_files_and_is_deterministic() {
    let dir = tmp_dir("experiment");
    let config = dir.join("config.json");
    std::fs::write(
        &config,
        r#"{
  "dataset": { "kind": "simulated" },
  "task": "regression",
  "replications": 1,
  "sweep": { "name": "max_depth", "values": [2] },
  "methods": [
    { "family": "tree_inner", "ifa": "predecomp", "domain": "valid" }
  ],
  "base_seed": 3,
  "n_train": 80,
  "n_valid": 80
}"#,
    )
    .unwrap();
    for sub in ["run1", "run2"] {
        let out = run(&[
            "experiment",
            "--config",
            config.to_str().unwrap(),
            "--out-dir",
            dir.join(sub).to_str().unwrap(),
            "--jobs",
            "2",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in [
        "report.csv",
        "report.json",
        "auc.csv",
        "score-noisy.csv",
        "score-relevant.csv",
        "risk.csv",
        "identity-error.csv",
    ] {
        assert!(dir.join("run1").join(name).exists(), "missing {name}");
        let a = std::fs::read(dir.join("run1").join(name)).unwrap();
        let b = std::fs::read(dir.join("run2").join(name)).unwrap();
        assert_eq!(a, b, "{name} not deterministic");
    }
}
