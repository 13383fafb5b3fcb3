//! End-to-end subprocess tests for the fusemap binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fusemap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fusemap"))
        .args(args)
        .output()
        .expect("spawning fusemap")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_no_fusion_strategy(dir: &Path, layers: usize, batch: i64) -> PathBuf {
    let mut actions = vec![-1i64; layers + 1];
    actions[0] = batch;
    let path = dir.join("no_fusion.json");
    std::fs::write(&path, serde_json::to_string(&actions).unwrap()).unwrap();
    path
}

#[test]
fn eval_no_fusion_is_speedup_one_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let strategy = write_no_fusion_strategy(dir.path(), 16, 64);
    let out = fusemap(&["eval", "vgg16", strategy.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let json = stdout_json(&out);
    assert_eq!(json["speedup"], 1.0);
    assert_eq!(json["valid"], true);
}

#[test]
fn eval_over_budget_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let strategy = dir.path().join("fused.json");
    let actions: Vec<i64> = vec![64; 17];
    std::fs::write(&strategy, serde_json::to_string(&actions).unwrap()).unwrap();
    let out = fusemap(&["eval", "vgg16", strategy.to_str().unwrap(), "--budget", "1MiB"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert_eq!(stdout_json(&out)["valid"], false);
}

#[test]
fn eval_missing_strategy_file_exits_one() {
    let out = fusemap(&["eval", "vgg16", "/no/such/strategy.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("strategy"), "{}", stderr(&out));
}

#[test]
fn eval_unknown_workload_names_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let strategy = write_no_fusion_strategy(dir.path(), 16, 64);
    let out = fusemap(&["eval", "vgg99", strategy.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("vgg99"), "{}", stderr(&out));
}

#[test]
fn search_with_same_seed_writes_identical_files() {
    let run = |dir: &Path| {
        let out = fusemap(&[
            "search", "resnet18", "--budget", "16MiB", "--seed", "7", "--population", "8",
            "--generations", "5", "--out-dir", dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    };
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(d1.path());
    run(d2.path());
    for name in ["strategy.json", "result.json", "history.csv"] {
        let a = std::fs::read(d1.path().join(name)).unwrap();
        let b = std::fs::read(d2.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn brute_force_on_vgg16_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = fusemap(&[
        "search", "vgg16", "--algo", "brute", "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("exceed"), "{}", stderr(&out));
}

#[test]
fn zoo_list_names_every_builtin() {
    let out = fusemap(&["zoo-list"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    for name in ["vgg16", "resnet18", "resnet50", "mobilenet_v2", "mnasnet"] {
        assert!(text.contains(name), "missing {name} in:\n{text}");
    }
}

#[test]
fn grad_check_passes_from_the_cli() {
    let out = fusemap(&["grad-check", "--seed", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout_json(&out)["passed"], true);
}

#[test]
fn train_on_empty_dataset_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("empty.jsonl");
    std::fs::write(&data, "").unwrap();
    let out = fusemap(&[
        "train", "--data", data.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("empty"), "{}", stderr(&out));
}

/// Reads the JSON trailer of a checkpoint file.
fn checkpoint_meta(path: &Path) -> serde_json::Value {
    let bytes = std::fs::read(path).unwrap();
    let len = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap()) as usize;
    serde_json::from_slice(&bytes[bytes.len() - 8 - len..bytes.len() - 8]).unwrap()
}

#[test]
fn dataset_train_infer_finetune_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    let out = fusemap(&[
        "dataset", "resnet18", "--budgets", "8MiB,16MiB", "--top-k", "2", "--population", "10",
        "--generations", "5", "--seed", "3", "--out-dir", data_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let data = data_dir.join("dataset.jsonl");

    let train_dir = dir.path().join("train");
    let out = fusemap(&[
        "train", "--data", data.to_str().unwrap(), "--epochs", "3", "--dim", "8", "--heads", "2",
        "--blocks", "1", "--max-timesteps", "32", "--seed", "5", "--out-dir",
        train_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let ckpt = train_dir.join("model.ckpt");
    let loss = std::fs::read_to_string(train_dir.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 4, "header plus one line per epoch:\n{loss}");

    let infer_dir = dir.path().join("infer");
    let out = fusemap(&[
        "infer", "--model", ckpt.to_str().unwrap(), "resnet18", "--budget", "16MiB", "--out-dir",
        infer_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let json = stdout_json(&out);
    assert_eq!(json["strategy"].as_array().unwrap().len(), 19);
    assert!(json["model_seconds"].as_f64().unwrap() > 0.0);
    assert!(json["costmodel_seconds"].as_f64().unwrap() > 0.0);
    let strategy: Vec<i64> =
        serde_json::from_str(&std::fs::read_to_string(infer_dir.join("strategy.json")).unwrap())
            .unwrap();
    assert_eq!(strategy.len(), 19);
    // A budget far outside the trained range still runs, with a warning.
    let out = fusemap(&["infer", "--model", ckpt.to_str().unwrap(), "resnet18", "--budget", "1GiB"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("outside the trained range"), "{}", stderr(&out));

    let tune_dir = dir.path().join("tune");
    let out = fusemap(&[
        "finetune", "--parent", ckpt.to_str().unwrap(), "--data", data.to_str().unwrap(),
        "--epoch-fraction", "0.5", "--seed", "6", "--out-dir", tune_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let meta = checkpoint_meta(&tune_dir.join("model.ckpt"));
    assert_eq!(meta["training"]["epochs"], 2, "0.5 of 3 epochs rounds to 2");
    let lineage = &meta["lineage"];
    assert_eq!(lineage["epoch_fraction"], 0.5);
    assert_eq!(lineage["parent_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn compare_lists_every_method_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = fusemap(&[
        "compare", "resnet18", "--budget", "16MiB", "--samples", "50", "--population", "8",
        "--generations", "5", "--seed", "9", "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    for method in ["no_fusion", "uniform", "random", "ga"] {
        assert!(text.contains(method), "missing {method} row:\n{text}");
    }
    let csv = std::fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    assert!(csv.starts_with("method,latency_seconds,peak_bytes,speedup,samples,wall_time_seconds"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn manifests_record_seeds_and_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let out = fusemap(&[
        "search", "resnet18", "--budget", "8MiB", "--seed", "11", "--population", "8",
        "--generations", "4", "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seeds"]["search"], 11);
    assert_eq!(manifest["config"]["budget_bytes"], 8 << 20);
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() > 0.0);
    assert!(manifest["outputs"].as_array().unwrap().len() >= 3);
}
