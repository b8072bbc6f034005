//! Glue between a trained model and the metrics: scoring, evaluation with
//! fusion histograms, and the variant ablation harness.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::EncodedDocument;
use crate::labelgraph::LabelEmbedding;
use crate::metrics::{evaluate, fusion_weight_histogram, EvalReport, LabelGroupSpec};
use crate::model::{forward, ModelConfig, ModelParams, Variant};
use crate::training::{TrainConfig, Trainer, TrainingExample};
use crate::{Error, Result};

/// Full-label-set scores of one document, plus fusion weights when the
/// variant has them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDocument {
    pub scores: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
}

pub fn score_documents(
    docs: &[&EncodedDocument],
    params: &ModelParams,
    labels: Option<&LabelEmbedding>,
    variant: Variant,
) -> Result<Vec<ScoredDocument>> {
    let all: Vec<usize> = (0..params.w_s2.rows()).collect();
    docs.par_iter()
        .map(|doc| {
            let t = forward(doc, params, labels, variant, &all)?;
            Ok(ScoredDocument {
                scores: t.y_hat,
                alpha: t.alpha,
                beta: t.beta,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub taus: Vec<usize>,
    pub groups: LabelGroupSpec,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            taus: crate::metrics::DEFAULT_TAUS.to_vec(),
            groups: LabelGroupSpec::default(),
        }
    }
}

/// Scores `examples` and builds the report. `train_frequencies` (one entry
/// per label) decides group membership. Variants with fusion weights get
/// α/β histograms over (document, positive label) pairs.
pub fn evaluate_model(
    examples: &[TrainingExample],
    params: &ModelParams,
    labels: Option<&LabelEmbedding>,
    variant: Variant,
    settings: &EvalSettings,
    train_frequencies: &[usize],
) -> Result<EvalReport> {
    let k = params.w_s2.rows();
    if train_frequencies.len() != k {
        return Err(Error::Validation(format!(
            "training label space has {} labels, model has {k}",
            train_frequencies.len()
        )));
    }
    let docs: Vec<&EncodedDocument> = examples.iter().map(|e| &e.encoded).collect();
    let scored = score_documents(&docs, params, labels, variant)?;
    let scores: Vec<Vec<f64>> = scored.iter().map(|s| s.scores.clone()).collect();
    let truths: Vec<_> = examples.iter().map(|e| e.labels.clone()).collect();
    let mut report = evaluate(
        &scores,
        &truths,
        &settings.taus,
        &settings.groups,
        train_frequencies,
    )?;

    let mut pairs = Vec::new();
    for (s, e) in scored.iter().zip(examples) {
        if let (Some(a), Some(b)) = (&s.alpha, &s.beta) {
            pairs.extend(e.labels.iter().map(|&j| (a[j], b[j])));
        }
    }
    if !pairs.is_empty() {
        report.histograms.insert(
            variant.as_str().to_string(),
            fusion_weight_histogram(&pairs)?,
        );
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub variant: Variant,
    pub loss_history: Vec<f64>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub runs: Vec<AblationRun>,
}

impl AblationReport {
    pub fn run(&self, variant: Variant) -> Option<&AblationRun> {
        self.runs.iter().find(|r| r.variant == variant)
    }
}

/// Trains each variant from the same initial parameters and evaluates it.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    variants: &[Variant],
    initial: &ModelParams,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    train: &[TrainingExample],
    test: &[TrainingExample],
    labels: Option<&LabelEmbedding>,
    settings: &EvalSettings,
    train_frequencies: &[usize],
) -> Result<AblationReport> {
    let mut runs = Vec::with_capacity(variants.len());
    for &variant in variants {
        let mut trainer = Trainer::new(
            model_config.clone(),
            initial.clone(),
            train_config.clone(),
            variant,
        )?;
        trainer.run(train, labels)?;
        let report = evaluate_model(
            test,
            &trainer.params,
            labels,
            variant,
            settings,
            train_frequencies,
        )?;
        runs.push(AblationRun {
            variant,
            loss_history: trainer.history,
            report,
        });
    }
    Ok(AblationReport { runs })
}
