use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::checkpoint::Checkpoint;
use super::loss::PROB_CLAMP;
use super::sampling::sample_labels;
use crate::data::{encode_document, Corpus, EncodedDocument, Vocabulary, PAD};
use crate::labelgraph::LabelEmbedding;
use crate::model::{forward_on_tape, ModelConfig, ModelParams, Variant};
use crate::numeric::{Matrix, Tape};
use crate::rng::rng_for;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub negatives_per_doc: usize,
    pub seed: u64,
    pub finetune_word_vectors: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 64,
            epochs: 10,
            negatives_per_doc: 10,
            seed: 0,
            finetune_word_vectors: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingExample {
    pub encoded: EncodedDocument,
    pub labels: BTreeSet<usize>,
}

pub fn encode_corpus(
    corpus: &Corpus,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Vec<TrainingExample>> {
    corpus
        .documents
        .iter()
        .map(|d| {
            Ok(TrainingExample {
                encoded: encode_document(d, vocab, max_len)?,
                labels: d.labels.clone(),
            })
        })
        .collect()
}

/// Gradients of one document's loss. The embedding table gradient is kept
/// as per-position columns so batches never materialise a dense copy per
/// document.
struct DocGradient {
    loss: f64,
    tensors: Vec<Option<Matrix>>,
    ids: Vec<usize>,
    embedded: Option<Matrix>,
}

/// Holds everything that evolves during training.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub variant: Variant,
    pub params: ModelParams,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<f64>,
}

impl Trainer {
    pub fn new(
        model_config: ModelConfig,
        params: ModelParams,
        train_config: TrainConfig,
        variant: Variant,
    ) -> Result<Self> {
        model_config.validate()?;
        train_config.validate()?;
        params.validate(&model_config)?;
        let adam = AdamState::new(params.tensors().iter().map(|(_, m)| m.shape()));
        Ok(Trainer {
            model_config,
            train_config,
            variant,
            params,
            adam,
            epoch: 0,
            history: Vec::new(),
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        ckpt.params.validate(&ckpt.model_config)?;
        Ok(Trainer {
            model_config: ckpt.model_config,
            train_config: ckpt.train_config,
            variant: ckpt.variant,
            params: ckpt.params,
            adam: ckpt.adam,
            epoch: ckpt.epoch,
            history: ckpt.history,
        })
    }

    pub fn to_checkpoint(&self, vocabulary: Option<Vocabulary>) -> Checkpoint {
        Checkpoint {
            model_config: self.model_config.clone(),
            train_config: self.train_config.clone(),
            variant: self.variant,
            epoch: self.epoch,
            params: self.params.clone(),
            adam: self.adam.clone(),
            history: self.history.clone(),
            vocabulary,
        }
    }

    fn check_labels(&self, labels: Option<&LabelEmbedding>) -> Result<()> {
        match labels {
            None if self.variant.uses_interaction() => Err(Error::Validation(format!(
                "variant {} requires label embeddings",
                self.variant
            ))),
            Some(l) if l.num_labels() != self.model_config.k || l.dim() != self.model_config.r => {
                Err(Error::Dimension {
                    op: "label embedding vs model config",
                    left: l.matrix.shape(),
                    right: (self.model_config.r, self.model_config.k),
                })
            }
            _ => Ok(()),
        }
    }

    fn doc_gradient(
        &self,
        example: &TrainingExample,
        subset: &[usize],
        labels: Option<&LabelEmbedding>,
        scale: f64,
    ) -> Result<DocGradient> {
        let mut tape = Tape::new();
        let pv = self.params.on_tape(&mut tape);
        let gathered = self
            .params
            .embedding
            .select_rows(&example.encoded.ids)?
            .transpose();
        let embedded = tape.leaf(gathered);
        let lv = labels.map(|l| tape.leaf_ref(&l.matrix));
        let f = forward_on_tape(
            &mut tape,
            &pv,
            embedded,
            &example.encoded.mask,
            lv,
            self.variant,
            subset,
            self.model_config.k,
        )?;
        let targets: Vec<f64> = subset
            .iter()
            .map(|l| if example.labels.contains(l) { 1.0 } else { 0.0 })
            .collect();
        let loss = tape.bce(f.y_hat, &targets, PROB_CLAMP)?;
        let loss_value = tape.value(loss)[(0, 0)];
        let scaled = tape.scale(loss, scale);
        let mut grads = tape.backward(scaled)?;
        let tensors = pv.to_vec().into_iter().map(|v| grads.take(v)).collect();
        let embedded = if self.train_config.finetune_word_vectors {
            grads.take(embedded)
        } else {
            None
        };
        Ok(DocGradient {
            loss: loss_value,
            tensors,
            ids: example.encoded.ids.clone(),
            embedded,
        })
    }

    /// Runs one epoch and returns its mean per-document loss.
    pub fn run_epoch(
        &mut self,
        examples: &[TrainingExample],
        labels: Option<&LabelEmbedding>,
    ) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::Validation("training corpus is empty".into()));
        }
        self.check_labels(labels)?;
        let cfg = self.train_config.clone();
        let k = self.model_config.k;
        let epoch = self.epoch;
        let mut rng = rng_for(cfg.seed, &[0xe90c, epoch as u64]);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let subsets: Vec<Vec<usize>> = batch
                .iter()
                .map(|&i| sample_labels(&examples[i].labels, cfg.negatives_per_doc, k, &mut rng))
                .collect::<Result<_>>()?;
            let scale = 1.0 / batch.len() as f64;
            let doc_grads: Vec<DocGradient> = batch
                .par_iter()
                .zip(subsets.par_iter())
                .map(|(&i, subset)| self.doc_gradient(&examples[i], subset, labels, scale))
                .collect::<Result<_>>()?;

            // Fixed reduction order: batch position.
            let mut grads = self.params.zeros_like();
            let mut batch_loss = 0.0;
            for dg in doc_grads {
                batch_loss += dg.loss;
                for ((_, acc), g) in grads.tensors_mut().into_iter().zip(dg.tensors) {
                    if let Some(g) = g {
                        acc.add_assign(&g)?;
                    }
                }
                if let Some(e) = dg.embedded {
                    for (t, &id) in dg.ids.iter().enumerate() {
                        if id == PAD {
                            continue;
                        }
                        for (row, acc) in grads.embedding.row_mut(id).iter_mut().enumerate() {
                            *acc += e[(row, t)];
                        }
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss at epoch {epoch}, batch {batch_idx}"
                )));
            }
            epoch_loss += batch_loss;
            if !cfg.finetune_word_vectors {
                grads.embedding = Matrix::zeros(grads.embedding.rows(), grads.embedding.cols());
            }
            adam_step(
                &mut self.params.tensors_mut(),
                &grads.tensors(),
                &mut self.adam,
                cfg.learning_rate,
            )?;
        }
        let mean = epoch_loss / examples.len() as f64;
        self.epoch += 1;
        self.history.push(mean);
        Ok(mean)
    }

    /// Trains until `train_config.epochs` epochs are complete.
    pub fn run(
        &mut self,
        examples: &[TrainingExample],
        labels: Option<&LabelEmbedding>,
    ) -> Result<()> {
        while self.epoch < self.train_config.epochs {
            self.run_epoch(examples, labels)?;
        }
        Ok(())
    }
}

/// Trains the fused model and returns the final parameters with the
/// per-epoch mean loss history.
pub fn train(
    examples: &[TrainingExample],
    params: ModelParams,
    labels: &LabelEmbedding,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<(ModelParams, Vec<f64>)> {
    if examples.is_empty() {
        return Err(Error::Validation("training corpus is empty".into()));
    }
    let mut trainer = Trainer::new(model_config.clone(), params, config.clone(), Variant::Fused)?;
    trainer.run(examples, Some(labels))?;
    Ok((trainer.params, trainer.history))
}
