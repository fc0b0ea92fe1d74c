use std::path::Path;
use std::process::Command;

use discourse_chain::RunConfig;
use serde_json::json;

const ACTS: [&str; 4] = ["question", "answer", "agreement", "disagreement"];
const WORDS: [&str; 12] = [
    "battery", "screen", "phone", "charger", "update", "camera", "price", "store", "warranty", "cable", "speaker", "case",
];

fn write_corpus(path: &Path, threads: usize) {
    let mut lines = Vec::new();
    for t in 0..threads {
        let mut posts = Vec::new();
        for c in 0..4 {
            let parent = match c {
                0 => None,
                3 => Some("p0".to_string()),
                _ => Some(format!("p{}", c - 1)),
            };
            let words: Vec<&str> = (0..5).map(|k| WORDS[(t * 7 + c * 3 + k) % WORDS.len()]).collect();
            posts.push(json!({
                "id": format!("p{c}"),
                "in_reply_to": parent,
                "author": format!("user{}", (t + c) % 5),
                "created_utc": 1_500_000_000 + t as i64 * 40_000 + c as i64 * 60,
                "body": format!("{} the {}", ACTS[c], words.join(" ")),
                "majority_type": ACTS[c],
            }));
        }
        lines.push(json!({"id": format!("t{t}"), "title": format!("about {}", WORDS[t % WORDS.len()]), "posts": posts}).to_string());
    }
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

fn tiny_config(path: &Path, arch: &str) {
    let cfg = RunConfig {
        arch: arch.into(),
        word_dim: 8,
        comment_dim: 8,
        word_hidden: 6,
        sentence_hidden: 6,
        comment_hidden: 6,
        filters: 4,
        mlp_hidden: [6, 6],
        min_count: 1,
        folds: 2,
        epochs: 2,
        batch_size: 8,
        embed_epochs: 1,
        deterministic: true,
        ..RunConfig::default()
    };
    cfg.save(path).unwrap();
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_discourse-chain"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = |p: &str| dir.path().join(p).to_str().unwrap().to_string();
    write_corpus(&dir.path().join("threads.jsonl"), 12);
    tiny_config(&dir.path().join("cfg.json"), "hlstm-attn");
    ok(&["ingest", "--in", &d("threads.jsonl"), "--out", &d("corpus"), "--config", &d("cfg.json")]);
    for f in ["vocab.tsv", "idf_thread.tsv", "idf_comment.tsv", "chains.tsv"] {
        assert!(dir.path().join("corpus").join(f).exists(), "{f}");
    }
    ok(&["embed", "--corpus", &d("corpus"), "--config", &d("cfg.json")]);
    assert!(dir.path().join("corpus/word_embeddings.bin").exists());
    ok(&["train", "--corpus", &d("corpus"), "--out", &d("run"), "--config", &d("cfg.json")]);
    assert!(dir.path().join("run/train_log.csv").exists());
    assert!(dir.path().join("run/hlstm-attn.fold0.len3.ckpt").exists());

    ok(&["evaluate", "--ckpt-dir", &d("run"), "--corpus", &d("corpus")]);
    let metrics = std::fs::read_to_string(dir.path().join("run/metrics.csv")).unwrap();
    assert!(metrics.starts_with("class,precision,recall,f1,support\n"));
    assert_eq!(metrics.lines().count(), 1 + 10 + 2);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run/summary.json")).unwrap()).unwrap();
    assert!(summary["per_comment"]["weighted"]["f1"].is_number());
    let predictions = std::fs::read_to_string(dir.path().join("run/predictions.jsonl")).unwrap();
    assert_eq!(predictions.lines().count(), 12 * 4);

    write_corpus(&dir.path().join("new.jsonl"), 2);
    ok(&["tag", "--ckpt-dir", &d("run"), "--corpus", &d("corpus"), "--in", &d("new.jsonl"), "--out", &d("tagged.jsonl")]);
    let tagged = std::fs::read_to_string(dir.path().join("tagged.jsonl")).unwrap();
    assert_eq!(tagged.lines().count(), 2 * 4);

    ok(&["relevance", "--ckpt-dir", &d("run"), "--corpus", &d("corpus"), "--out", &d("rel.jsonl")]);
    let rel = std::fs::read_to_string(dir.path().join("rel.jsonl")).unwrap();
    assert!(!rel.is_empty());
    for line in rel.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let sum: f64 = v["relevance"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        assert!(v["tokens"].as_array().unwrap().is_empty() || (sum - 1.0).abs() < 1e-5, "{line}");
    }

    ok(&["characterize", "--corpus", &d("corpus"), "--predictions", &d("run/predictions.jsonl"), "--out", &d("chars")]);
    let series = std::fs::read_to_string(dir.path().join("chars/series.csv")).unwrap();
    assert!(series.starts_with("window_start,act,fraction\n"));
    let partition: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("chars/partition.json")).unwrap()).unwrap();
    assert_eq!(partition["method"], "exact");

    // Deterministic mode: a second run gives identical checkpoints.
    ok(&["train", "--corpus", &d("corpus"), "--out", &d("run2"), "--config", &d("cfg.json")]);
    for entry in std::fs::read_dir(dir.path().join("run")).unwrap() {
        let name = entry.unwrap().file_name();
        if name.to_string_lossy().ends_with(".ckpt") {
            let a = std::fs::read(dir.path().join("run").join(&name)).unwrap();
            let b = std::fs::read(dir.path().join("run2").join(&name)).unwrap();
            assert!(a == b, "{name:?} differs");
        }
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = |p: &str| dir.path().join(p).to_str().unwrap().to_string();
    assert_eq!(run(&["train"]).status.code(), Some(1));
    assert_eq!(run(&["ingest", "--in", &d("x"), "--out", &d("o"), "--arch", "rnn"]).status.code(), Some(1));
    assert_eq!(run(&["ingest", "--in", &d("missing.jsonl"), "--out", &d("o")]).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.jsonl"), "not json\n").unwrap();
    assert_eq!(run(&["ingest", "--in", &d("bad.jsonl"), "--out", &d("o")]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn vector_architecture_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = |p: &str| dir.path().join(p).to_str().unwrap().to_string();
    write_corpus(&dir.path().join("threads.jsonl"), 8);
    tiny_config(&dir.path().join("cfg.json"), "mlp");
    ok(&["ingest", "--in", &d("threads.jsonl"), "--out", &d("corpus"), "--config", &d("cfg.json")]);
    // Training a vector model before embedding is a data error.
    assert_eq!(run(&["train", "--corpus", &d("corpus"), "--out", &d("run"), "--config", &d("cfg.json")]).status.code(), Some(2));
    ok(&["embed", "--corpus", &d("corpus"), "--config", &d("cfg.json")]);
    assert!(dir.path().join("corpus/comment_embeddings.bin").exists());
    ok(&["train", "--corpus", &d("corpus"), "--out", &d("run"), "--config", &d("cfg.json"), "--precision", "f64"]);
    ok(&["evaluate", "--ckpt-dir", &d("run"), "--corpus", &d("corpus")]);
    assert!(dir.path().join("run/metrics_nine.csv").exists());
}
