use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn protofid(args: &[&str], env: &[(&str, &str)]) -> Output {
    let data = root().join("data/pima.csv");
    let rules = root().join("data/kb.rules");
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_protofid"));
    cmd.args(args);
    if args.first().is_some_and(|a| !a.starts_with('-')) {
        cmd.arg("--data").arg(&data).arg("--rules").arg(&rules);
    }
    cmd.env_remove("PF_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

const SMALL: [&str; 6] = ["--repeats", "1", "--folds", "3", "--epochs", "3"];

fn json(args: &[&str], env: &[(&str, &str)]) -> Value {
    let mut all = args.to_vec();
    all.extend_from_slice(&SMALL);
    let out = protofid(&all, env);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.ends_with('\n'));
    serde_json::from_str(&text).unwrap()
}

#[test]
fn exit_codes() {
    let bad_value = protofid(&["train", "--alpha", "abc"], &[]);
    assert_eq!(bad_value.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_value.stderr).contains("Usage"));

    assert_eq!(protofid(&["metrics", "--no-such-flag"], &[]).status.code(), Some(1));
    assert_eq!(protofid(&["--help"], &[]).status.code(), Some(0));
    assert_eq!(protofid(&["extract", "--max-rules", "0"], &[]).status.code(), Some(1));
    assert_eq!(protofid(&["ingest"], &[("PF_SEED", "abc")]).status.code(), Some(1));

    let missing = Command::new(env!("CARGO_BIN_EXE_protofid"))
        .args(["ingest", "--data", "/nonexistent/pima.csv"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn ingest_summary() {
    let v = json(&["ingest"], &[]);
    assert_eq!(v["rows"], 768);
    assert_eq!(v["class_counts"], serde_json::json!([500, 268]));
    assert_eq!(v["features"].as_array().unwrap().len(), 8);
}

#[test]
fn seed_environment_variable_overrides_flag() {
    let from_env = json(&["metrics", "--seed", "1"], &[("PF_SEED", "7")]);
    let from_flag = json(&["metrics", "--seed", "7"], &[]);
    let other = json(&["metrics", "--seed", "1"], &[]);
    assert_eq!(from_env, from_flag);
    assert_ne!(from_env, other);
}

#[test]
fn similarity_flags_select_one_slice() {
    let v = json(&["similarity", "--metric", "xnor", "--subset", "correct", "--max-rules", "6"], &[]);
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["kind"], "xnor");
    assert_eq!(rows[0]["subset"], "all_correct");
    assert_eq!(rows[0]["budget"], 6);
}

#[test]
fn train_writes_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("net.json");
    let out = protofid(&["train", "--epochs", "2", "--hidden", "4,3", "--out", p.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let net = protofid::io::load_checkpoint(&p).unwrap();
    assert_eq!(net.config.hidden_sizes, (4, 3));
    assert_eq!(net.config.alpha, 1.5);
    assert_eq!(net.loss_history.len(), 2);
}

#[test]
fn run_all_matches_the_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["run-all", "--out", dir.path().to_str().unwrap()];
    args.extend_from_slice(&SMALL);
    let out = protofid(&args, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.json", "table3.csv", "fig2a.csv", "fig3a.csv", "fig3b.csv", "fig3b_correct.csv", "fig3c.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["table3"], json(&["metrics"], &[]));
    assert_eq!(report["alpha_sweep"], json(&["sweep-alpha"], &[]));
    assert_eq!(report["fidelity"], json(&["extract"], &[]));
    assert_eq!(report["similarity"], json(&["similarity"], &[]));
    assert_eq!(report["robustness"], json(&["robustness"], &[]));
}
