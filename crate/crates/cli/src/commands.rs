use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use laha::data::{build_vocab, load_corpus, load_word_vectors, Corpus, Vocabulary, WordVectors};
use laha::fsutil::{open_buffered, read_to_string, write_atomic};
use laha::labelgraph::{
    build_cooccurrence_graph, load_embedding, load_graph, sample_walks, save_embedding, save_graph,
    train_skipgram, LabelEmbedding, LabelGraph,
};
use laha::metrics::rank_labels;
use laha::model::{export_attention, forward, ModelConfig, ModelParams, Variant};
use laha::pipeline::{evaluate_model, run_ablation};
use laha::synthetic::generate;
use laha::training::{encode_corpus, load_checkpoint, save_checkpoint, Checkpoint, Trainer};
use serde::Serialize;

use crate::config::Settings;
use crate::error::{CliError, CliResult};

fn require(path: Option<PathBuf>, what: &str, key: &str) -> CliResult<PathBuf> {
    let path = path.ok_or_else(|| {
        CliError::missing_input(format!("no {what} configured (set paths.{key})"))
    })?;
    if !path.exists() {
        return Err(CliError::missing_input(format!(
            "{what} {} does not exist",
            path.display()
        )));
    }
    Ok(path)
}

fn read_corpus(path: &Path) -> CliResult<Corpus> {
    let reader = open_buffered(path)?;
    load_corpus(reader).map_err(|e| CliError::from(e).in_file(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::new(crate::error::Exit::Failure, e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn label_count(settings: &Settings, corpus: &Corpus) -> CliResult<usize> {
    let seen = corpus.label_space();
    match settings.file.model.k {
        Some(k) if k < seen => Err(CliError::malformed(format!(
            "corpus uses label {} but model.k is {k}",
            seen - 1
        ))),
        Some(k) => Ok(k),
        None => Ok(seen),
    }
}

fn check_labels_below(corpus: &Corpus, k: usize, path: &Path) -> CliResult<()> {
    if corpus.label_space() > k {
        return Err(CliError::malformed(format!(
            "{}: label {} is outside the model's {k} labels",
            path.display(),
            corpus.label_space() - 1
        )));
    }
    Ok(())
}

fn load_label_embedding(settings: &Settings, config: &ModelConfig) -> CliResult<LabelEmbedding> {
    let path = settings.label_embedding_path();
    if !path.exists() {
        return Err(CliError::prerequisite(format!(
            "variant {} needs a label embedding but {} does not exist; run `laha embed-labels` first",
            settings.variant,
            path.display()
        )));
    }
    let l = load_embedding(&path).map_err(|e| CliError::from(e).in_file(&path))?;
    if l.dim() != config.r || l.num_labels() != config.k {
        return Err(CliError::incompatible(format!(
            "{} is {}x{}, model expects r={} and k={}; rerun `laha embed-labels`",
            path.display(),
            l.dim(),
            l.num_labels(),
            config.r,
            config.k
        )));
    }
    Ok(l)
}

fn maybe_label_embedding(
    settings: &Settings,
    config: &ModelConfig,
    variant: Variant,
) -> CliResult<Option<LabelEmbedding>> {
    if variant.uses_interaction() {
        load_label_embedding(settings, config).map(Some)
    } else {
        Ok(None)
    }
}

pub fn build_graph(settings: &Settings) -> CliResult<()> {
    let train = require(settings.train_path(), "training corpus", "train")?;
    let corpus = read_corpus(&train)?;
    let k = label_count(settings, &corpus)?;
    let graph = build_cooccurrence_graph(&corpus, k)?;
    let summary = graph.summary();
    save_graph(&settings.graph_path(), &graph)?;
    write_json(&settings.graph_summary_path(), &summary)?;
    println!(
        "label graph: {} nodes, {} edges, {} isolated -> {}",
        summary.nodes,
        summary.edges,
        summary.isolated,
        settings.graph_path().display()
    );
    Ok(())
}

fn graph_for_embedding(settings: &Settings) -> CliResult<LabelGraph> {
    let graph_path = settings.graph_path();
    if graph_path.exists() {
        return load_graph(&graph_path).map_err(|e| CliError::from(e).in_file(&graph_path));
    }
    let train = require(settings.train_path(), "training corpus", "train").map_err(|e| {
        CliError::missing_input(format!(
            "no label graph at {} and no usable training corpus: {e}",
            graph_path.display()
        ))
    })?;
    let corpus = read_corpus(&train)?;
    let k = label_count(settings, &corpus)?;
    Ok(build_cooccurrence_graph(&corpus, k)?)
}

pub fn embed_labels(settings: &Settings) -> CliResult<()> {
    let graph = graph_for_embedding(settings)?;
    let walks = sample_walks(&graph, &settings.walk_config())?;
    let embedding = train_skipgram(&walks, graph.num_nodes(), &settings.skipgram_config())?;
    let path = settings.label_embedding_path();
    save_embedding(&path, &embedding)?;
    println!(
        "label embedding: r={} k={} from {} walks -> {}",
        embedding.dim(),
        embedding.num_labels(),
        walks.len(),
        path.display()
    );
    Ok(())
}

fn word_vectors(settings: &Settings, vocab: &Vocabulary, d: usize) -> CliResult<WordVectors> {
    match settings.word_vectors_path() {
        Some(path) => {
            let path = require(Some(path), "word vector file", "word_vectors")?;
            let reader = open_buffered(&path)?;
            load_word_vectors(reader, vocab, d, settings.seed)
                .map_err(|e| CliError::from(e).in_file(&path))
        }
        None => Ok(WordVectors::random(vocab, d, settings.seed)),
    }
}

fn write_loss_history(path: &Path, history: &[f64]) -> CliResult<()> {
    let mut csv = String::from("epoch,loss\n");
    for (i, loss) in history.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", i + 1, loss));
    }
    write_atomic(path, csv.as_bytes())?;
    Ok(())
}

pub fn train(settings: &Settings, resume: bool) -> CliResult<()> {
    let train = require(settings.train_path(), "training corpus", "train")?;
    let corpus = read_corpus(&train)?;
    let k = label_count(settings, &corpus)?;
    let config = settings.model_config(k);
    let m = &settings.file.model;
    let labels = maybe_label_embedding(settings, &config, settings.variant)?;
    let ckpt_path = settings.checkpoint_path();

    let (mut trainer, vocab) = if resume {
        let (ckpt, vocab) = load_model(settings, &config)?;
        let mut trainer = Trainer::from_checkpoint(ckpt)?;
        trainer.train_config.epochs = settings.train_config().epochs;
        (trainer, vocab)
    } else {
        let vocab = build_vocab(&corpus, m.min_freq, m.max_vocab)?;
        let wv = word_vectors(settings, &vocab, config.d)?;
        let params = ModelParams::init(&config, &wv, settings.seed)?;
        let trainer = Trainer::new(
            config.clone(),
            params,
            settings.train_config(),
            settings.variant,
        )?;
        (trainer, vocab)
    };
    let examples = encode_corpus(&corpus, &vocab, config.max_len)?;

    eprintln!(
        "training {} on {} documents, {} labels, vocabulary {}",
        trainer.variant,
        examples.len(),
        k,
        vocab.len()
    );
    while trainer.epoch < trainer.train_config.epochs {
        let loss = trainer.run_epoch(&examples, labels.as_ref())?;
        eprintln!("epoch {:>3}  loss {loss:.6}", trainer.epoch);
        save_checkpoint(&ckpt_path, &trainer.to_checkpoint(Some(vocab.clone())))?;
    }
    if trainer.train_config.epochs == 0 || trainer.history.is_empty() {
        save_checkpoint(&ckpt_path, &trainer.to_checkpoint(Some(vocab.clone())))?;
    }
    let history_path = settings.out_dir.join("loss_history.csv");
    write_loss_history(&history_path, &trainer.history)?;
    println!("checkpoint -> {}", ckpt_path.display());
    println!("loss history -> {}", history_path.display());
    Ok(())
}

/// Loads the checkpoint and checks it against the configured model shape.
fn load_model(settings: &Settings, expected: &ModelConfig) -> CliResult<(Checkpoint, Vocabulary)> {
    let path = settings.checkpoint_path();
    if !path.exists() {
        return Err(CliError::prerequisite(format!(
            "no checkpoint at {}; run `laha train` first",
            path.display()
        )));
    }
    let ckpt = load_checkpoint(&path).map_err(|e| CliError::from(e).in_file(&path))?;
    let got = &ckpt.model_config;
    if (got.d, got.r, got.d_a, got.max_len, got.k)
        != (
            expected.d,
            expected.r,
            expected.d_a,
            expected.max_len,
            expected.k,
        )
    {
        return Err(CliError::incompatible(format!(
            "{} was trained with d={} r={} d_a={} max_len={} k={}, config gives d={} r={} d_a={} max_len={} k={}",
            path.display(),
            got.d,
            got.r,
            got.d_a,
            got.max_len,
            got.k,
            expected.d,
            expected.r,
            expected.d_a,
            expected.max_len,
            expected.k
        )));
    }
    if settings.variant_explicit && settings.variant != ckpt.variant {
        return Err(CliError::incompatible(format!(
            "{} holds a {} model, config asks for {}",
            path.display(),
            ckpt.variant,
            settings.variant
        )));
    }
    let vocab = ckpt
        .vocabulary
        .clone()
        .ok_or_else(|| CliError::incompatible(format!("{} has no vocabulary", path.display())))?;
    Ok((ckpt, vocab))
}

/// Loads the training corpus (for k and frequencies) and the checkpoint.
fn trained_model(
    settings: &Settings,
) -> CliResult<(Corpus, Checkpoint, Vocabulary, Option<LabelEmbedding>)> {
    let train = require(settings.train_path(), "training corpus", "train")?;
    let corpus = read_corpus(&train)?;
    let k = label_count(settings, &corpus)?;
    let config = settings.model_config(k);
    let (ckpt, vocab) = load_model(settings, &config)?;
    let labels = maybe_label_embedding(settings, &config, ckpt.variant)?;
    Ok((corpus, ckpt, vocab, labels))
}

fn evaluation_corpus(settings: &Settings, k: usize) -> CliResult<(PathBuf, Corpus)> {
    let path = match settings.test_path() {
        Some(p) => require(Some(p), "test corpus", "test")?,
        None => require(settings.train_path(), "training corpus", "train")?,
    };
    let corpus = read_corpus(&path)?;
    check_labels_below(&corpus, k, &path)?;
    Ok((path, corpus))
}

pub fn evaluate(settings: &Settings) -> CliResult<()> {
    let test = require(settings.test_path(), "test corpus", "test")?;
    let (train_corpus, ckpt, vocab, labels) = trained_model(settings)?;
    let k = ckpt.model_config.k;
    let test_corpus = read_corpus(&test)?;
    check_labels_below(&test_corpus, k, &test)?;
    let examples = encode_corpus(&test_corpus, &vocab, ckpt.model_config.max_len)?;
    let report = evaluate_model(
        &examples,
        &ckpt.params,
        labels.as_ref(),
        ckpt.variant,
        &settings.eval_settings()?,
        &train_corpus.label_frequencies(k),
    )?;
    let path = settings.out_dir.join("report.json");
    write_json(&path, &report)?;
    for m in &report.overall.at {
        println!(
            "P@{:<2} {:.4}   nDCG@{:<2} {:.4}",
            m.tau,
            m.precision.unwrap_or(f64::NAN),
            m.tau,
            m.ndcg.unwrap_or(f64::NAN)
        );
    }
    println!("report -> {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct ScoredLabel {
    label: usize,
    score: f64,
}

#[derive(Serialize)]
struct Prediction<'a> {
    id: &'a str,
    labels: Vec<ScoredLabel>,
}

fn selected<'a>(
    corpus: &'a Corpus,
    ids: &[String],
    path: &Path,
) -> CliResult<Vec<&'a laha::data::Document>> {
    if ids.is_empty() {
        return Ok(corpus.documents.iter().collect());
    }
    ids.iter()
        .map(|id| {
            corpus.find(id).ok_or_else(|| {
                CliError::missing_input(format!("document {id} not found in {}", path.display()))
            })
        })
        .collect()
}

pub fn predict(settings: &Settings, ids: &[String]) -> CliResult<()> {
    let (_, ckpt, vocab, labels) = trained_model(settings)?;
    let k = ckpt.model_config.k;
    let topk = settings.topk;
    if topk == 0 || topk > k {
        return Err(CliError::malformed(format!(
            "topk must be in 1..={k}, got {topk}"
        )));
    }
    let (path, corpus) = evaluation_corpus(settings, k)?;
    let docs = selected(&corpus, ids, &path)?;
    let all: Vec<usize> = (0..k).collect();
    let mut out = String::new();
    for doc in docs {
        let encoded = laha::data::encode_document(doc, &vocab, ckpt.model_config.max_len)?;
        let trace = forward(&encoded, &ckpt.params, labels.as_ref(), ckpt.variant, &all)?;
        let ranked = rank_labels(&trace.y_hat)?;
        let line = Prediction {
            id: &doc.doc_id,
            labels: ranked[..topk]
                .iter()
                .map(|&j| ScoredLabel {
                    label: j,
                    score: trace.y_hat[j],
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&line).expect("serializable"));
        out.push('\n');
    }
    let dest = settings.out_dir.join("predictions.jsonl");
    write_atomic(&dest, out.as_bytes())?;
    print!("{out}");
    eprintln!("predictions -> {}", dest.display());
    Ok(())
}

fn read_label_names(settings: &Settings) -> CliResult<Option<Vec<String>>> {
    match settings.label_names_path() {
        Some(p) => {
            let p = require(Some(p), "label name file", "label_names")?;
            Ok(Some(
                read_to_string(&p)?.lines().map(str::to_string).collect(),
            ))
        }
        None => Ok(None),
    }
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes per-label word weights for the document's true labels and its
/// `topk` best-scored labels.
pub fn export_attention_cmd(settings: &Settings, id: &str) -> CliResult<()> {
    let (_, ckpt, vocab, labels) = trained_model(settings)?;
    let k = ckpt.model_config.k;
    let (path, corpus) = evaluation_corpus(settings, k)?;
    let doc = selected(&corpus, &[id.to_string()], &path)?[0];
    let names = read_label_names(settings)?;
    let max_len = ckpt.model_config.max_len;
    let encoded = laha::data::encode_document(doc, &vocab, max_len)?;

    let all: Vec<usize> = (0..k).collect();
    let scores = forward(&encoded, &ckpt.params, labels.as_ref(), ckpt.variant, &all)?.y_hat;
    let mut chosen: BTreeSet<usize> = doc.labels.clone();
    chosen.extend(rank_labels(&scores)?.into_iter().take(settings.topk.min(k)));
    let subset: Vec<usize> = chosen.into_iter().collect();

    let trace = forward(
        &encoded,
        &ckpt.params,
        labels.as_ref(),
        ckpt.variant,
        &subset,
    )?;
    let tokens: Vec<String> = doc.tokens.iter().take(max_len).cloned().collect();
    let report = export_attention(&doc.doc_id, &trace, &tokens, names.as_deref());
    let dest = settings
        .out_dir
        .join(format!("attention_{}.json", file_safe(&doc.doc_id)));
    write_json(&dest, &report)?;
    println!(
        "attention for {} labels -> {}",
        report.labels.len(),
        dest.display()
    );
    Ok(())
}

pub fn generate_synthetic(settings: &Settings) -> CliResult<()> {
    let cfg = settings.synthetic_config();
    let train = generate(&cfg)?;
    let test = generate(&laha::synthetic::SyntheticConfig {
        seed: cfg.seed.wrapping_add(1),
        ..cfg
    })?;
    let train_path = settings
        .train_path()
        .unwrap_or_else(|| settings.out_dir.join("synthetic_train.jsonl"));
    let test_path = settings
        .test_path()
        .unwrap_or_else(|| settings.out_dir.join("synthetic_test.jsonl"));
    write_atomic(&train_path, train.to_jsonl().as_bytes())?;
    write_atomic(&test_path, test.to_jsonl().as_bytes())?;
    println!(
        "synthetic corpus: {} train -> {}, {} test -> {}",
        train.len(),
        train_path.display(),
        test.len(),
        test_path.display()
    );
    Ok(())
}

pub fn ablate(settings: &Settings) -> CliResult<()> {
    let train = require(settings.train_path(), "training corpus", "train")?;
    let corpus = read_corpus(&train)?;
    let k = label_count(settings, &corpus)?;
    let config = settings.model_config(k);
    let labels = load_label_embedding(settings, &config)?;
    let (_, test_corpus) = evaluation_corpus(settings, k)?;
    let m = &settings.file.model;
    let vocab = build_vocab(&corpus, m.min_freq, m.max_vocab)?;
    let wv = word_vectors(settings, &vocab, config.d)?;
    let params = ModelParams::init(&config, &wv, settings.seed)?;
    let train_examples = encode_corpus(&corpus, &vocab, config.max_len)?;
    let test_examples = encode_corpus(&test_corpus, &vocab, config.max_len)?;
    let report = run_ablation(
        &Variant::ALL,
        &params,
        &config,
        &settings.train_config(),
        &train_examples,
        &test_examples,
        Some(&labels),
        &settings.eval_settings()?,
        &corpus.label_frequencies(k),
    )?;
    let dest = settings.out_dir.join("ablation.json");
    write_json(&dest, &report)?;
    for run in &report.runs {
        let at: Vec<String> = run
            .report
            .overall
            .at
            .iter()
            .map(|m| format!("P@{}={:.4}", m.tau, m.precision.unwrap_or(f64::NAN)))
            .collect();
        println!("{:<6} {}", run.variant.as_str(), at.join(" "));
    }
    println!("ablation -> {}", dest.display());
    Ok(())
}
