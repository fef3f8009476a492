use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn leap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leap"))
        .current_dir(dir)
        .args(args)
        .env_remove("LEAP_BRIDGE_ADDR")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = leap(dir, args);
    assert!(
        out.status.success(),
        "leap {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// 30 days; relation k fires on days where day % 3 == k % 3.
fn fixture(dir: &Path) {
    let mut tsv = String::new();
    for day in 0..30u32 {
        let date = format!("2012-01-{:02}", day + 1);
        for k in (0..6).filter(|k| k % 3 == day % 3) {
            tsv.push_str(&format!("Actor {k}\tAct {k}\tTarget {}\t{date}\tactor {k} did act {k}\n", (k + 1) % 4));
        }
    }
    fs::write(dir.join("events.tsv"), tsv).unwrap();
    fs::write(
        dir.join("run.toml"),
        r#"
output_dir = "out"
seed = 2
[data]
path = "events.tsv"
[embedding]
kind = "test_encoder"
dim = 8
seed = 0
[mef]
model_dim = 8
lr = 0.01
weight_decay = 0.0
epochs = 5
[op1]
entity_dim = 8
conv_kernels = 2
epochs = 2
use_text = false
"#,
    )
    .unwrap();
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/manifest.json")).unwrap()).unwrap()
}

#[test]
fn ingest_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let v: Value = serde_json::from_str(&ok(dir.path(), &["ingest", "--input", "events.tsv"])).unwrap();
    assert_eq!(v["relations"], 6);
    assert_eq!(v["quintuples"], 60);
    assert_eq!(v["first_date"], "2012-01-01");
    let stats: Value = serde_json::from_str(&ok(
        dir.path(),
        &["stats", "--input", "events.tsv", "--ratios", "0.8,0.1,0.1", "--json"],
    ))
    .unwrap();
    assert_eq!(stats["train"]["days"], 24);
    assert_eq!(stats["valid"]["days"], 3);
    assert_eq!(stats["test"]["days"], 3);
    assert_eq!(stats["total"]["quintuples"], 60);
}

#[test]
fn split_writes_three_parts() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    ok(dir.path(), &["split", "--input", "events.tsv", "--boundaries", "20,25", "--out-dir", "parts"]);
    let lines = |p: &str| fs::read_to_string(dir.path().join("parts").join(p)).unwrap().lines().count();
    assert_eq!(lines("train.tsv") + lines("valid.tsv") + lines("test.tsv"), 60);
    assert_eq!(lines("valid.tsv"), 10);
}

#[test]
fn prompts_and_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    ok(dir.path(), &["prompts", "--input", "events.tsv", "--variant", "zero-shot", "--out", "p.jsonl"]);
    let text = fs::read_to_string(dir.path().join("p.jsonl")).unwrap();
    assert!(!text.is_empty());
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(!v["prompt"].as_str().unwrap().contains("## Example"));
    }
    ok(dir.path(), &["embed", "--input", "events.tsv", "--dim", "8", "--out", "vec.bin"]);
    let out = ok(dir.path(), &["embed", "--input", "events.tsv", "--validate", "vec.bin"]);
    assert!(out.contains("covers all 60"));
    fs::write(dir.path().join("bad.bin"), b"NOTASTORE").unwrap();
    assert!(!leap(dir.path(), &["embed", "--input", "events.tsv", "--validate", "bad.bin"]).status.success());
}

#[test]
fn mef_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let out = ok(dir.path(), &["mef", "--config", "run.toml", "--l3", "3", "--seed", "5"]);
    assert!(out.contains("F1"));
    let m = manifest(dir.path());
    assert_eq!(m["config"]["mef"]["window"], 3);
    assert_eq!(m["seed"], 5);
    assert_eq!(m["status"], "complete");
    let report = ok(dir.path(), &["report", "out/report.json"]);
    assert!(report.contains("Precision"));

    ok(
        dir.path(),
        &["eval-mef", "--config", "run.toml", "--checkpoint", "out/mef.ckpt", "--predictions", "pred.csv"],
    );
    assert!(fs::read_to_string(dir.path().join("pred.csv")).unwrap().starts_with("day,relation_id,prob,decision,label\n"));
    let wrong = leap(dir.path(), &["eval-mef", "--config", "run.toml", "--checkpoint", "out/mef.ckpt", "--no-attention"]);
    assert!(!wrong.status.success());
}

#[test]
fn op1_and_op2_runs() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    ok(dir.path(), &["train-op1", "--config", "run.toml"]);
    assert!(dir.path().join("out/op1.ckpt").exists());
    let out = ok(dir.path(), &["eval-op1", "--config", "run.toml", "--checkpoint", "out/op1.ckpt"]);
    assert!(out.contains("Hits@10"));

    ok(dir.path(), &["gen-op2", "--config", "run.toml", "--generator", "baseline", "--output-dir", "gen"]);
    let out = ok(
        dir.path(),
        &["eval-op2", "--prompts", "gen/prompts.jsonl", "--generations", "gen/generations.jsonl"],
    );
    assert!(out.contains("ROUGE-L"));
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let unknown = leap(dir.path(), &["mef", "--config", "run.toml", "--frobnicate"]);
    assert_eq!(unknown.status.code(), Some(2));
    let both = leap(
        dir.path(),
        &["stats", "--input", "events.tsv", "--ratios", "0.8,0.1,0.1", "--boundaries", "3,4"],
    );
    assert_eq!(both.status.code(), Some(2));
    let bad_ratios = leap(dir.path(), &["stats", "--input", "events.tsv", "--ratios", "0.8,0.2"]);
    assert_eq!(bad_ratios.status.code(), Some(2));
    let conflict = leap(
        dir.path(),
        &["op2", "--config", "run.toml", "--generator", "baseline", "--bridge", "127.0.0.1:1"],
    );
    assert!(!conflict.status.success());
    fs::write(
        dir.path().join("op1.toml"),
        fs::read_to_string(dir.path().join("run.toml")).unwrap().replacen("output_dir", "task = \"op1\"\noutput_dir", 1),
    )
    .unwrap();
    let mismatch = leap(dir.path(), &["mef", "--config", "op1.toml"]);
    assert!(!mismatch.status.success());
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("conflicts"));
    let missing = leap(dir.path(), &["ingest", "--input", "nope.tsv"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn bridge_generator_without_address_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let out = leap(dir.path(), &["op2", "--config", "run.toml", "--generator", "bridge"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("LEAP_BRIDGE_ADDR"));
    assert_eq!(manifest(dir.path())["status"], "failed");
}
