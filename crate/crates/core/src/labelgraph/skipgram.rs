use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numeric::{sigmoid, Matrix};
use crate::rng::rng_for;
use crate::{Error, Result};

/// `r × k` label matrix; column `i` embeds label `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelEmbedding {
    pub matrix: Matrix,
}

impl LabelEmbedding {
    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn num_labels(&self) -> usize {
        self.matrix.cols()
    }

    pub fn vector(&self, label: usize) -> Vec<f64> {
        self.matrix.column(label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SkipGramConfig {
    pub r: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial learning rate, decayed linearly towards `lr * 1e-4`.
    pub lr: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            r: 256,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
            seed: 0,
        }
    }
}

const MIN_LR_FRACTION: f64 = 1e-4;
const UNIGRAM_POWER: f64 = 0.75;

/// Skip-gram with negative sampling over walk windows.
///
/// Negatives come from the unigram distribution of walk occurrences raised to
/// the 0.75 power. Labels that never appear in a walk keep their seeded
/// initial vectors.
pub fn train_skipgram(
    walks: &[Vec<usize>],
    k: usize,
    config: &SkipGramConfig,
) -> Result<LabelEmbedding> {
    if config.r == 0 || config.window == 0 {
        return Err(Error::Validation("r and window must be at least 1".into()));
    }
    if walks.is_empty() {
        return Err(Error::Validation(
            "cannot embed labels from zero walks".into(),
        ));
    }
    if let Some(&bad) = walks.iter().flatten().find(|&&n| n >= k) {
        return Err(Error::Validation(format!(
            "walk visits node {bad} outside label space of {k}"
        )));
    }
    let r = config.r;
    let mut init_rng = rng_for(config.seed, &[0x5eed]);
    let bound = 0.5 / r as f64;
    let mut input: Vec<f64> = (0..k * r)
        .map(|_| init_rng.gen_range(-bound..bound))
        .collect();
    let mut output = vec![0.0; k * r];

    let mut counts = vec![0.0f64; k];
    for &n in walks.iter().flatten() {
        counts[n] += 1.0;
    }
    let noise = WeightedIndex::new(counts.iter().map(|c| c.powf(UNIGRAM_POWER)))
        .map_err(|e| Error::Degenerate(format!("negative sampling table: {e}")))?;

    let total_steps = (config.epochs * walks.iter().map(Vec::len).sum::<usize>()).max(1) as f64;
    let mut step = 0usize;
    let mut grad = vec![0.0; r];
    for epoch in 0..config.epochs {
        let mut rng = rng_for(config.seed, &[0x5ca1e, epoch as u64]);
        for walk in walks {
            for (i, &center) in walk.iter().enumerate() {
                let lr = config.lr * (1.0 - step as f64 / total_steps).max(MIN_LR_FRACTION);
                step += 1;
                let lo = i.saturating_sub(config.window);
                let hi = (i + config.window + 1).min(walk.len());
                for (j, &context) in walk.iter().enumerate().take(hi).skip(lo) {
                    if j == i {
                        continue;
                    }
                    grad.fill(0.0);
                    let center_vec = center * r..(center + 1) * r;
                    let mut update = |target: usize, label: f64, output: &mut [f64]| {
                        let out_vec = &mut output[target * r..(target + 1) * r];
                        let dot: f64 = input[center_vec.clone()]
                            .iter()
                            .zip(out_vec.iter())
                            .map(|(a, b)| a * b)
                            .sum();
                        let g = (label - sigmoid(dot)) * lr;
                        for ((acc, o), c) in grad
                            .iter_mut()
                            .zip(out_vec.iter_mut())
                            .zip(&input[center_vec.clone()])
                        {
                            *acc += g * *o;
                            *o += g * c;
                        }
                    };
                    update(context, 1.0, &mut output);
                    for _ in 0..config.negatives {
                        let neg = noise.sample(&mut rng);
                        if neg != context {
                            update(neg, 0.0, &mut output);
                        }
                    }
                    for (v, g) in input[center * r..(center + 1) * r].iter_mut().zip(&grad) {
                        *v += g;
                    }
                }
            }
        }
    }

    let rows_k = Matrix::new(k, r, input)?;
    Ok(LabelEmbedding {
        matrix: rows_k.transpose(),
    })
}
