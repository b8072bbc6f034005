//! Acceptance criteria. Each test prints one `[PASS]`/`[FAIL]` line.
//!
//! Run with `cargo test -p laha-core --test acceptance -- --nocapture` to
//! see the lines.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use laha::data::{build_vocab, EncodedDocument, WordVectors};
use laha::labelgraph::{
    build_cooccurrence_graph, next_node, sample_walks, train_skipgram, LabelEmbedding, LabelGraph,
    SkipGramConfig, WalkConfig,
};
use laha::metrics::{ndcg_at_k, ndcg_at_k_with_log, precision_at_k, LabelGroupSpec};
use laha::model::{
    forward, forward_on_tape, interaction_scores_block, ModelConfig, ModelParams, ParamVars,
    Variant,
};
use laha::numeric::grad_check;
use laha::pipeline::{evaluate_model, run_ablation, EvalSettings};
use laha::synthetic::{generate, SyntheticConfig};
use laha::training::{
    bce_loss_on_tape, encode_corpus, load_checkpoint, save_checkpoint, write_checkpoint,
    TrainConfig, Trainer, TrainingExample,
};
use laha::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

// Pinned tolerances.
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_EPS: f64 = 1e-5;
const GRAD_TIME_LIMIT: Duration = Duration::from_secs(10);
const ATTN_SUM_TOL: f64 = 1e-9;
const CONVEX_TOL: f64 = 1e-12;
const METRIC_TOL: f64 = 1e-12;
const BLOCK_TOL: f64 = 1e-12;
const WALK_FREQ_TOL: f64 = 0.02;
const WALK_STEPS: usize = 100_000;
const CHI2_MIN_P: f64 = 0.01;
const Q_LIMIT_MIN_RETURN: f64 = 0.999;
const OVERFIT_P1: f64 = 0.95;
const OVERFIT_P3: f64 = 0.60;
const OVERFIT_MAX_EPOCHS: usize = 50;
const OVERFIT_TIME_LIMIT: Duration = Duration::from_secs(120);

fn verdict(id: u32, name: &str, ok: bool, detail: &str) {
    let tag = if ok { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {id}: {name} ({detail})");
    assert!(ok, "criterion {id} failed: {detail}");
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_gradient_correctness() {
    let start = Instant::now();
    let cfg = ModelConfig {
        d: 5,
        r: 3,
        d_a: 3,
        k: 4,
        max_len: 4,
    };
    let mut r = rng(101);
    let params = ModelParams::random(&cfg, 7, 0.8, &mut r);
    let labels = Matrix::random_uniform(cfg.r, cfg.k, -1.0, 1.0, &mut r);
    let docs = [
        EncodedDocument {
            ids: vec![2, 5, 3, 6],
            mask: vec![true; 4],
        },
        EncodedDocument {
            ids: vec![4, 1, 0, 0],
            mask: vec![true, true, false, false],
        },
    ];
    let subsets: [&[usize]; 2] = [&[0, 1, 2, 3], &[0, 2, 3]];
    let targets = vec![vec![1.0, 0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0]];
    let tensors: Vec<Matrix> = params.tensors().iter().map(|(_, m)| (*m).clone()).collect();

    let report = grad_check(&tensors, GRAD_EPS, |tape, vars| {
        let pv = ParamVars::from_slice(vars);
        let l = tape.leaf(labels.clone());
        let mut probs = Vec::new();
        for (doc, subset) in docs.iter().zip(subsets) {
            let rows = tape.select_rows(pv.embedding, &doc.ids)?;
            let embedded = tape.transpose(rows);
            let f = forward_on_tape(
                tape,
                &pv,
                embedded,
                &doc.mask,
                Some(l),
                Variant::Fused,
                subset,
                cfg.k,
            )?;
            probs.push(f.y_hat);
        }
        bce_loss_on_tape(tape, &probs, &targets)
    })
    .unwrap();
    let elapsed = start.elapsed();
    let ok = report.max_relative_error <= GRAD_REL_TOL && elapsed < GRAD_TIME_LIMIT;
    verdict(
        1,
        "gradient correctness",
        ok,
        &format!(
            "max rel err {:.2e} <= {GRAD_REL_TOL:e} over {} entries, {:.2}s",
            report.max_relative_error,
            report.entries_checked,
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// 2. Attention normalization
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_attention_normalization() {
    let mut r = rng(202);
    let mut worst_sum = 0.0f64;
    let mut worst_convex = 0.0f64;
    let mut masked_nonzero = 0usize;
    let mut alpha_beta_inexact = 0usize;
    for _ in 0..100 {
        let n = r.gen_range(1..=8);
        let cfg = ModelConfig {
            d: r.gen_range(1..=6),
            r: r.gen_range(1..=5),
            d_a: r.gen_range(1..=5),
            k: r.gen_range(1..=6),
            max_len: n,
        };
        let vocab = 10;
        let params = ModelParams::random(&cfg, vocab, 1.5, &mut r);
        let l = LabelEmbedding {
            matrix: Matrix::random_uniform(cfg.r, cfg.k, -2.0, 2.0, &mut r),
        };
        let valid = r.gen_range(1..=n);
        let doc = EncodedDocument {
            ids: (0..n)
                .map(|i| if i < valid { r.gen_range(1..vocab) } else { 0 })
                .collect(),
            mask: (0..n).map(|i| i < valid).collect(),
        };
        let mut subset: Vec<usize> = (0..cfg.k).filter(|_| r.gen_bool(0.7)).collect();
        if subset.is_empty() {
            subset.push(0);
        }
        let t = forward(&doc, &params, Some(&l), Variant::Fused, &subset).unwrap();
        for a in [t.a_self.as_ref().unwrap(), t.a_inter.as_ref().unwrap()] {
            for j in 0..subset.len() {
                let col = a.column(j);
                worst_sum = worst_sum.max((col.iter().sum::<f64>() - 1.0).abs());
                masked_nonzero += col[valid..].iter().filter(|&&v| v != 0.0).count();
            }
        }
        let (alpha, beta) = (t.alpha.as_ref().unwrap(), t.beta.as_ref().unwrap());
        let (cs, ci) = (t.c_self.as_ref().unwrap(), t.c_inter.as_ref().unwrap());
        for j in 0..subset.len() {
            if alpha[j] + beta[j] != 1.0 {
                alpha_beta_inexact += 1;
            }
            for row in 0..t.c.rows() {
                let want = alpha[j] * cs[(row, j)] + beta[j] * ci[(row, j)];
                worst_convex = worst_convex.max((t.c[(row, j)] - want).abs());
                let (lo, hi) = if cs[(row, j)] < ci[(row, j)] {
                    (cs[(row, j)], ci[(row, j)])
                } else {
                    (ci[(row, j)], cs[(row, j)])
                };
                let c = t.c[(row, j)];
                if c < lo - CONVEX_TOL || c > hi + CONVEX_TOL {
                    worst_convex = worst_convex.max(f64::INFINITY);
                }
            }
        }
    }
    let ok = worst_sum <= ATTN_SUM_TOL
        && masked_nonzero == 0
        && alpha_beta_inexact == 0
        && worst_convex <= CONVEX_TOL;
    verdict(
        2,
        "attention normalization",
        ok,
        &format!(
            "max |colsum-1| {worst_sum:.1e}, masked nonzero {masked_nonzero}, alpha+beta!=1 {alpha_beta_inexact}, convexity err {worst_convex:.1e}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 3. Metric oracle equivalence
// ---------------------------------------------------------------------------

/// Rank of label `j`: number of labels strictly ahead of it.
fn brute_rank(scores: &[f64], j: usize) -> usize {
    (0..scores.len())
        .filter(|&i| scores[i] > scores[j] || (scores[i] == scores[j] && i < j))
        .count()
}

fn brute_precision(scores: &[f64], truth: &BTreeSet<usize>, tau: usize) -> f64 {
    let hits = truth
        .iter()
        .filter(|&&j| brute_rank(scores, j) < tau)
        .count();
    hits as f64 / tau as f64
}

fn brute_ndcg(scores: &[f64], truth: &BTreeSet<usize>, tau: usize) -> f64 {
    let mut dcg = 0.0;
    for &j in truth {
        let rank = brute_rank(scores, j);
        if rank < tau {
            dcg += 1.0 / ((rank + 2) as f64).log2();
        }
    }
    let mut ideal = 0.0;
    for i in 1..=tau.min(truth.len()) {
        ideal += 1.0 / ((i + 1) as f64).log2();
    }
    dcg / ideal
}

#[test]
fn criterion_3_metric_oracle() {
    let mut r = rng(303);
    let (mut worst_p, mut worst_n, mut worst_base) = (0.0f64, 0.0f64, 0.0f64);
    let mut p1_mismatch = 0;
    for _ in 0..1000 {
        let k = r.gen_range(1..=20);
        // Coarse scores force ties.
        let coarse = r.gen_bool(0.3);
        let scores: Vec<f64> = (0..k)
            .map(|_| {
                let s: f64 = r.gen_range(-1.0..1.0);
                if coarse {
                    (s * 4.0).round() / 4.0
                } else {
                    s
                }
            })
            .collect();
        let m = r.gen_range(1..=k);
        let mut truth = BTreeSet::new();
        while truth.len() < m {
            truth.insert(r.gen_range(0..k));
        }
        let tau = r.gen_range(1..=k);
        let p = precision_at_k(&scores, &truth, tau).unwrap();
        let n = ndcg_at_k(&scores, &truth, tau).unwrap();
        worst_p = worst_p.max((p - brute_precision(&scores, &truth, tau)).abs());
        worst_n = worst_n.max((n - brute_ndcg(&scores, &truth, tau)).abs());
        let ln = ndcg_at_k_with_log(&scores, &truth, tau, f64::ln).unwrap();
        worst_base = worst_base.max((n - ln).abs());
        if precision_at_k(&scores, &truth, 1).unwrap() != ndcg_at_k(&scores, &truth, 1).unwrap() {
            p1_mismatch += 1;
        }
    }
    let ok = worst_p <= METRIC_TOL
        && worst_n <= METRIC_TOL
        && worst_base <= METRIC_TOL
        && p1_mismatch == 0;
    verdict(
        3,
        "metric oracle equivalence",
        ok,
        &format!(
            "P err {worst_p:.1e}, nDCG err {worst_n:.1e}, log-base err {worst_base:.1e}, P@1!=nDCG@1 in {p1_mismatch}/1000"
        ),
    );
}

// ---------------------------------------------------------------------------
// 4. Block identity for interaction scores
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_block_identity() {
    let mut r = rng(404);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (rr, n, k) = (
            r.gen_range(1..=16),
            r.gen_range(1..=20),
            r.gen_range(1..=12),
        );
        let hf = Matrix::random_uniform(rr, n, -3.0, 3.0, &mut r);
        let hb = Matrix::random_uniform(rr, n, -3.0, 3.0, &mut r);
        let q = Matrix::random_uniform(rr, k, -3.0, 3.0, &mut r);
        let block = interaction_scores_block(&hf, &hb, &q).unwrap();
        let summed = hf.add(&hb).unwrap().transpose().matmul(&q).unwrap();
        worst = worst.max(block.max_abs_diff(&summed));
    }
    verdict(
        4,
        "block identity",
        worst <= BLOCK_TOL,
        &format!("max |block - summed| {worst:.1e} over 100 shapes"),
    );
}

// ---------------------------------------------------------------------------
// 5. Walk statistics
// ---------------------------------------------------------------------------

fn five_node_graph() -> LabelGraph {
    LabelGraph::from_edges(
        5,
        &[
            (0, 1, 3),
            (0, 2, 1),
            (1, 2, 2),
            (1, 3, 5),
            (2, 3, 1),
            (2, 4, 4),
            (3, 4, 2),
            (0, 4, 1),
        ],
    )
    .unwrap()
}

#[test]
fn criterion_5_walk_statistics() {
    let g = five_node_graph();
    // 5 starts × walks_per_node × (walk_length - 1) transitions ≥ 10⁵.
    let cfg = WalkConfig {
        p: 1.0,
        q: 1.0,
        walk_length: 41,
        walks_per_node: WALK_STEPS.div_ceil(5 * 40),
        seed: 55,
    };
    let walks = sample_walks(&g, &cfg).unwrap();
    let mut counts = vec![vec![0usize; 5]; 5];
    let mut steps = 0;
    for w in &walks {
        for pair in w.windows(2) {
            counts[pair[0]][pair[1]] += 1;
            steps += 1;
        }
    }
    let mut worst = 0.0f64;
    let mut chi2 = 0.0;
    let mut dof = 0.0;
    for (cur, row) in counts.iter().enumerate() {
        let total: usize = row.iter().sum();
        let neighbors = g.neighbors(cur);
        let wsum: f64 = neighbors.iter().map(|&(_, w)| w as f64).sum();
        for &(nb, w) in neighbors {
            let expected = w as f64 / wsum;
            let observed = row[nb] as f64 / total as f64;
            worst = worst.max((observed - expected).abs());
            let e = expected * total as f64;
            chi2 += (row[nb] as f64 - e).powi(2) / e;
        }
        dof += (neighbors.len() - 1) as f64;
        for (x, &c) in row.iter().enumerate() {
            if !g.has_edge(cur, x) {
                assert_eq!(c, 0, "walk used non-edge {cur}->{x}");
            }
        }
    }
    let p_value = 1.0 - ChiSquared::new(dof).unwrap().cdf(chi2);

    // q → ∞ on the path a–b–c, standing at b having come from a.
    let path = LabelGraph::from_edges(3, &[(0, 1, 1), (1, 2, 1)]).unwrap();
    let mut r = rng(505);
    let returns = (0..WALK_STEPS)
        .filter(|_| next_node(&path, Some(0), 1, 1.0, 1e9, &mut r) == Some(0))
        .count();
    let return_rate = returns as f64 / WALK_STEPS as f64;

    let ok = steps >= WALK_STEPS
        && worst <= WALK_FREQ_TOL
        && p_value > CHI2_MIN_P
        && return_rate >= Q_LIMIT_MIN_RETURN;
    verdict(
        5,
        "walk statistics",
        ok,
        &format!(
            "{steps} steps, max |freq - prob| {worst:.4}, chi2 p-value {p_value:.3}, q-limit return rate {return_rate:.5}"
        ),
    );
}

// ---------------------------------------------------------------------------
// Synthetic pipeline shared by criteria 6-9
// ---------------------------------------------------------------------------

struct Synthetic {
    model_config: ModelConfig,
    params: ModelParams,
    labels: LabelEmbedding,
    examples: Vec<TrainingExample>,
    frequencies: Vec<usize>,
}

fn synthetic_model_config() -> ModelConfig {
    ModelConfig {
        d: 16,
        r: 16,
        d_a: 16,
        k: 8,
        max_len: 32,
    }
}

fn synthetic_train_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.01,
        batch_size: 8,
        epochs,
        negatives_per_doc: 8,
        seed: 7,
        finetune_word_vectors: true,
    }
}

fn synthetic_setup(model_config: ModelConfig, seed: u64) -> Synthetic {
    let corpus = generate(&SyntheticConfig::default()).unwrap();
    let k = model_config.k;
    let vocab = build_vocab(&corpus, 1, 10_000).unwrap();
    let graph = build_cooccurrence_graph(&corpus, k).unwrap();
    let walks = sample_walks(
        &graph,
        &WalkConfig {
            seed,
            ..WalkConfig::default()
        },
    )
    .unwrap();
    let labels = train_skipgram(
        &walks,
        k,
        &SkipGramConfig {
            r: model_config.r,
            seed,
            ..SkipGramConfig::default()
        },
    )
    .unwrap();
    let wv = WordVectors::random(&vocab, model_config.d, seed);
    let params = ModelParams::init(&model_config, &wv, seed).unwrap();
    let examples = encode_corpus(&corpus, &vocab, model_config.max_len).unwrap();
    Synthetic {
        frequencies: corpus.label_frequencies(k),
        model_config,
        params,
        labels,
        examples,
    }
}

// ---------------------------------------------------------------------------
// 6. Synthetic overfit
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_synthetic_overfit() {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let (ok, detail) = pool.install(|| {
        let start = Instant::now();
        let s = synthetic_setup(synthetic_model_config(), 0);
        let settings = EvalSettings::default();
        let mut trainer = Trainer::new(
            s.model_config.clone(),
            s.params.clone(),
            synthetic_train_config(OVERFIT_MAX_EPOCHS),
            Variant::Fused,
        )
        .unwrap();
        let (mut p1, mut p3) = (0.0, 0.0);
        while trainer.epoch < OVERFIT_MAX_EPOCHS {
            trainer.run_epoch(&s.examples, Some(&s.labels)).unwrap();
            let report =
                evaluate_model(&s.examples, &trainer.params, Some(&s.labels), Variant::Fused, &settings, &s.frequencies)
                    .unwrap();
            p1 = report.overall.precision(1).unwrap();
            p3 = report.overall.precision(3).unwrap();
            if p1 >= OVERFIT_P1 && p3 >= OVERFIT_P3 {
                break;
            }
        }
        let elapsed = start.elapsed();
        let ok = p1 >= OVERFIT_P1 && p3 >= OVERFIT_P3 && elapsed < OVERFIT_TIME_LIMIT;
        let detail = format!(
            "P@1 {p1:.3} >= {OVERFIT_P1}, P@3 {p3:.3} >= {OVERFIT_P3} after {} epochs, {:.1}s single-threaded",
            trainer.epoch,
            elapsed.as_secs_f64()
        );
        (ok, detail)
    });
    verdict(6, "synthetic overfit", ok, &detail);
}

// ---------------------------------------------------------------------------
// 7. Ablation harness
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_ablation_harness() {
    let s = synthetic_setup(synthetic_model_config(), 1);
    let settings = EvalSettings::default();
    let report = run_ablation(
        &Variant::ALL,
        &s.params,
        &s.model_config,
        &synthetic_train_config(15),
        &s.examples,
        &s.examples,
        Some(&s.labels),
        &settings,
        &s.frequencies,
    )
    .unwrap();
    let mut ok = report.runs.len() == Variant::ALL.len();
    let mut summary = Vec::new();
    for run in &report.runs {
        let r = &run.report;
        let comparable = r
            .overall
            .at
            .iter()
            .map(|m| m.tau)
            .eq(settings.taus.iter().copied())
            && r.groups.len() == settings.groups.num_groups()
            && r.documents == s.examples.len();
        let decreased = run.loss_history.last() < run.loss_history.first();
        ok &= comparable && decreased && run.loss_history.iter().all(|l| l.is_finite());
        summary.push(format!(
            "{} P@1={:.3} P@3={:.3}",
            run.variant,
            r.overall.precision(1).unwrap(),
            r.overall.precision(3).unwrap()
        ));
    }
    verdict(7, "ablation harness", ok, &summary.join(", "));
}

// ---------------------------------------------------------------------------
// 8. Determinism and checkpointing
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_determinism_and_checkpointing() {
    let cfg = ModelConfig {
        d: 8,
        r: 8,
        d_a: 8,
        k: 8,
        max_len: 32,
    };
    let tc = TrainConfig {
        negatives_per_doc: 3,
        ..synthetic_train_config(4)
    };
    let run = || {
        let s = synthetic_setup(cfg.clone(), 3);
        let mut t =
            Trainer::new(cfg.clone(), s.params.clone(), tc.clone(), Variant::Fused).unwrap();
        t.run(&s.examples, Some(&s.labels)).unwrap();
        (s, t)
    };
    let (s, a) = run();
    let (_, b) = run();
    let identical = write_checkpoint(&a.to_checkpoint(None)).unwrap()
        == write_checkpoint(&b.to_checkpoint(None)).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("half.ckpt");
    let mut first =
        Trainer::new(cfg.clone(), s.params.clone(), tc.clone(), Variant::Fused).unwrap();
    first.run_epoch(&s.examples, Some(&s.labels)).unwrap();
    first.run_epoch(&s.examples, Some(&s.labels)).unwrap();
    save_checkpoint(&path, &first.to_checkpoint(None)).unwrap();
    drop(first);
    let mut resumed = Trainer::from_checkpoint(load_checkpoint(&path).unwrap()).unwrap();
    resumed.run(&s.examples, Some(&s.labels)).unwrap();
    let resumed_identical = write_checkpoint(&resumed.to_checkpoint(None)).unwrap()
        == write_checkpoint(&a.to_checkpoint(None)).unwrap();

    verdict(
        8,
        "determinism and checkpointing",
        identical && resumed_identical,
        &format!("repeat run bit-identical: {identical}, 2+2 resumed == 4 epochs bit-identical: {resumed_identical}"),
    );
}

// ---------------------------------------------------------------------------
// 9. Tail-label grouping
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_tail_label_grouping() {
    let corpus = generate(&SyntheticConfig::default()).unwrap();
    // Hand count of the default synthetic corpus.
    const HAND_FREQUENCIES: [usize; 8] = [44, 36, 35, 19, 10, 6, 4, 2];
    let mut counted = [0usize; 8];
    for doc in &corpus.documents {
        for &l in &doc.labels {
            counted[l] += 1;
        }
    }
    let hand_group = |f: usize| {
        if f <= 5 {
            0
        } else if f <= 50 {
            1
        } else {
            2
        }
    };
    let expected: Vec<usize> = HAND_FREQUENCIES.iter().map(|&f| hand_group(f)).collect();
    let spec = LabelGroupSpec::default();
    let assigned = spec.assign(&corpus.label_frequencies(8));

    let s = synthetic_setup(synthetic_model_config(), 0);
    let report = evaluate_model(
        &s.examples,
        &s.params,
        Some(&s.labels),
        Variant::Fused,
        &EvalSettings::default(),
        &s.frequencies,
    )
    .unwrap();
    let reported: Vec<Vec<usize>> = report.groups.iter().map(|g| g.labels.clone()).collect();
    let expected_lists: Vec<Vec<usize>> = (0..3)
        .map(|g| (0..8).filter(|&j| expected[j] == g).collect())
        .collect();

    let ok = counted == HAND_FREQUENCIES && assigned == expected && reported == expected_lists;
    verdict(
        9,
        "tail-label grouping",
        ok,
        &format!(
            "frequencies {counted:?}, groups {}",
            report
                .groups
                .iter()
                .map(|g| format!("{}={:?}", g.name, g.labels))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    );
}
