use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL_MODEL: &str = r#"
seed = 5

[paths]
train = "train.jsonl"
test = "test.jsonl"

[model]
d = 6
r = 4
d_a = 4
max_len = 24

[train]
learning_rate = 0.01
batch_size = 8
epochs = 2
negatives_per_doc = 4

[walk]
walk_length = 10
walks_per_node = 4

[skipgram]
epochs = 2

[synthetic]
documents = 20
"#;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("run.toml"), config).unwrap();
        Workspace { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn write(&self, rel: &str, text: &str) {
        fs::write(self.path(rel), text).unwrap();
    }

    fn laha(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_laha"))
            .arg("--config")
            .arg(self.path("run.toml"))
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> Output {
        let out = self.laha(args);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{args:?} failed: {}",
            stderr(&out)
        );
        out
    }

    fn prepared(&self) {
        self.ok(&["generate-synthetic"]);
        self.ok(&["build-graph"]);
        self.ok(&["embed-labels"]);
    }
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn build_graph_writes_graph_and_summary() {
    let ws = Workspace::new(SMALL_MODEL);
    ws.ok(&["generate-synthetic"]);
    ws.ok(&["build-graph"]);
    assert!(ws.path("out/label_graph.txt").exists());
    let summary = read_json(&ws.path("out/graph_summary.json"));
    assert_eq!(summary["nodes"], 8);
    assert!(summary["edges"].as_u64().unwrap() > 0);
}

#[test]
fn missing_corpus_exits_2() {
    let ws = Workspace::new(SMALL_MODEL);
    let out = ws.laha(&["build-graph"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("train.jsonl"));
}

#[test]
fn missing_config_exits_2() {
    let out = Command::new(env!("CARGO_BIN_EXE_laha"))
        .args(["--config", "/nonexistent/run.toml", "build-graph"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_corpus_exits_3_with_line() {
    let ws = Workspace::new(SMALL_MODEL);
    ws.write(
        "train.jsonl",
        "{\"id\":\"a\",\"labels\":[0],\"text\":\"x y\"}\n{\"id\":\"b\",\"labels\":[],\"text\":\"z\"}\n",
    );
    let out = ws.laha(&["build-graph"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn unknown_config_key_exits_3() {
    let ws = Workspace::new("[model]\nhidden = 3\n");
    let out = ws.laha(&["build-graph"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("hidden"), "{}", stderr(&out));
}

#[test]
fn single_label_corpus_gives_isolated_nodes() {
    let ws = Workspace::new(SMALL_MODEL);
    ws.write(
        "train.jsonl",
        "{\"id\":\"a\",\"labels\":[0],\"text\":\"x\"}\n{\"id\":\"b\",\"labels\":[1],\"text\":\"y\"}\n{\"id\":\"c\",\"labels\":[2],\"text\":\"z\"}\n",
    );
    ws.ok(&["build-graph"]);
    let summary = read_json(&ws.path("out/graph_summary.json"));
    assert_eq!(summary["edges"], 0);
    assert_eq!(summary["isolated"], 3);
}

#[test]
fn embed_labels_is_deterministic_and_honours_r() {
    let ws = Workspace::new(SMALL_MODEL);
    ws.ok(&["generate-synthetic"]);
    ws.ok(&["build-graph"]);
    ws.ok(&["embed-labels"]);
    let first = fs::read(ws.path("out/label_embedding.txt")).unwrap();
    ws.ok(&["embed-labels"]);
    let second = fs::read(ws.path("out/label_embedding.txt")).unwrap();
    assert_eq!(first, second);
    let header = String::from_utf8(first)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert_eq!(header, "4 8");
}

#[test]
fn embed_labels_without_graph_or_corpus_exits_2() {
    let ws = Workspace::new(SMALL_MODEL);
    assert_eq!(ws.laha(&["embed-labels"]).status.code(), Some(2));
}

#[test]
fn interaction_variant_without_embedding_exits_4() {
    let ws = Workspace::new(SMALL_MODEL);
    ws.ok(&["generate-synthetic"]);
    let out = ws.laha(&["--variant", "ia", "train"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("embed-labels"), "{}", stderr(&out));
}

#[test]
fn self_attention_variant_trains_without_embedding() {
    let ws = Workspace::new(SMALL_MODEL);
    ws.ok(&["generate-synthetic"]);
    ws.ok(&["--variant", "sa", "train"]);
    assert!(ws.path("out/model.ckpt").exists());
}

#[test]
fn evaluate_without_checkpoint_exits_4() {
    let ws = Workspace::new(SMALL_MODEL);
    ws.prepared();
    assert_eq!(ws.laha(&["evaluate"]).status.code(), Some(4));
}

#[test]
fn full_pipeline_train_evaluate_predict_export() {
    let ws = Workspace::new(SMALL_MODEL);
    ws.prepared();
    ws.ok(&["train"]);
    let history = fs::read_to_string(ws.path("out/loss_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
    assert!(history.starts_with("epoch,loss\n"));

    ws.ok(&["evaluate"]);
    let report = read_json(&ws.path("out/report.json"));
    let taus: Vec<u64> = report["overall"]["at"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["tau"].as_u64().unwrap())
        .collect();
    assert_eq!(taus, vec![1, 3, 5]);
    assert_eq!(report["groups"].as_array().unwrap().len(), 3);
    assert!(report["histograms"]["laha"]["alpha"]["counts"].is_array());

    let out = ws.ok(&["predict", "--topk", "3"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        stdout,
        fs::read_to_string(ws.path("out/predictions.jsonl")).unwrap()
    );
    let lines: Vec<serde_json::Value> = stdout
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 20);
    for line in &lines {
        let labels = line["labels"].as_array().unwrap();
        assert_eq!(labels.len(), 3);
        let scores: Vec<f64> = labels
            .iter()
            .map(|l| l["score"].as_f64().unwrap())
            .collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    }

    ws.ok(&["export-attention", "--doc", "syn-001"]);
    let att = read_json(&ws.path("out/attention_syn-001.json"));
    assert_eq!(att["doc_id"], "syn-001");
    let first = &att["labels"][0]["tokens"];
    let total: f64 = first
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t[1].as_f64().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);

    assert_eq!(
        ws.laha(&["export-attention", "--doc", "nope"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn resume_extends_training() {
    let ws = Workspace::new(SMALL_MODEL);
    ws.prepared();
    ws.ok(&["train"]);
    let two = fs::read(ws.path("out/model.ckpt")).unwrap();
    let text = fs::read_to_string(ws.path("run.toml"))
        .unwrap()
        .replace("epochs = 2\nnegatives", "epochs = 3\nnegatives");
    ws.write("run.toml", &text);
    ws.ok(&["train", "--resume"]);
    let history = fs::read_to_string(ws.path("out/loss_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 4);
    assert_ne!(two, fs::read(ws.path("out/model.ckpt")).unwrap());
}

#[test]
fn checkpoint_shape_mismatch_exits_5() {
    let ws = Workspace::new(SMALL_MODEL);
    ws.prepared();
    ws.ok(&["train"]);
    let text = fs::read_to_string(ws.path("run.toml"))
        .unwrap()
        .replace("d_a = 4", "d_a = 5");
    ws.write("run.toml", &text);
    let out = ws.laha(&["evaluate"]);
    assert_eq!(out.status.code(), Some(5), "{}", stderr(&out));
}

#[test]
fn corrupted_checkpoint_exits_3() {
    let ws = Workspace::new(SMALL_MODEL);
    ws.prepared();
    ws.ok(&["train"]);
    let mut bytes = fs::read(ws.path("out/model.ckpt")).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    fs::write(ws.path("out/model.ckpt"), bytes).unwrap();
    assert_eq!(ws.laha(&["evaluate"]).status.code(), Some(3));
}

#[test]
fn ablate_reports_every_variant() {
    let ws = Workspace::new(SMALL_MODEL);
    ws.prepared();
    ws.ok(&["ablate"]);
    let report = read_json(&ws.path("out/ablation.json"));
    let variants: Vec<&str> = report["runs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["variant"].as_str().unwrap())
        .collect();
    assert_eq!(variants, vec!["sa", "ia", "sa+ia", "laha"]);
}

#[test]
fn out_flag_redirects_outputs() {
    let ws = Workspace::new(SMALL_MODEL);
    ws.ok(&["generate-synthetic"]);
    let other = ws.path("elsewhere");
    ws.ok(&["--out", other.to_str().unwrap(), "build-graph"]);
    assert!(other.join("label_graph.txt").exists());
    assert!(!ws.path("out/label_graph.txt").exists());
}
