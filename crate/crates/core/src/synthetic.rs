//! Seeded synthetic corpus with planted token-label structure.
//!
//! Every label owns a few signature tokens. A document carrying a label
//! contains some of that label's signature tokens; the remaining positions
//! are filled with shared noise tokens. Label popularity follows a skewed
//! weight profile so that both rare and common labels appear.

use std::collections::BTreeSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Corpus, Document};
use crate::rng::rng_for;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub documents: usize,
    pub labels: usize,
    /// Total distinct tokens: signature tokens plus noise tokens.
    pub vocab_size: usize,
    pub signature_tokens: usize,
    pub min_labels: usize,
    pub max_labels: usize,
    pub min_noise: usize,
    pub max_noise: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            documents: 50,
            labels: 8,
            vocab_size: 100,
            signature_tokens: 4,
            min_labels: 2,
            max_labels: 4,
            min_noise: 6,
            max_noise: 12,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Validation(m));
        if self.labels == 0 || self.documents == 0 {
            return err("synthetic corpus needs at least one label and one document".into());
        }
        if self.signature_tokens == 0 {
            return err("signature_tokens must be at least 1".into());
        }
        if self.labels * self.signature_tokens >= self.vocab_size {
            return err(format!(
                "vocab_size {} leaves no noise tokens after {} signature tokens",
                self.vocab_size,
                self.labels * self.signature_tokens
            ));
        }
        if self.min_labels == 0
            || self.min_labels > self.max_labels
            || self.max_labels > self.labels
        {
            return err(format!(
                "label count range {}..={} invalid for {} labels",
                self.min_labels, self.max_labels, self.labels
            ));
        }
        if self.min_noise > self.max_noise {
            return err("min_noise exceeds max_noise".into());
        }
        Ok(())
    }

    pub fn num_noise_tokens(&self) -> usize {
        self.vocab_size - self.labels * self.signature_tokens
    }
}

pub fn signature_token(label: usize, i: usize) -> String {
    format!("l{label}s{i}")
}

pub fn noise_token(i: usize) -> String {
    format!("n{i:03}")
}

/// Relative popularity of label `j`: decays geometrically so the last
/// labels are rare.
fn label_weight(j: usize) -> f64 {
    0.5f64.powi(j as i32)
}

/// Generates the corpus. Document `i < labels` is guaranteed to carry label
/// `i`, so every label occurs at least once.
pub fn generate(cfg: &SyntheticConfig) -> Result<Corpus> {
    cfg.validate()?;
    let weights: Vec<f64> = (0..cfg.labels).map(label_weight).collect();
    let popularity = WeightedIndex::new(&weights).expect("positive weights");
    let mut documents = Vec::with_capacity(cfg.documents);
    for i in 0..cfg.documents {
        let mut rng = rng_for(cfg.seed, &[0x5e7, i as u64]);
        let count = rng.gen_range(cfg.min_labels..=cfg.max_labels);
        let mut labels = BTreeSet::new();
        if i < cfg.labels {
            labels.insert(i);
        }
        while labels.len() < count {
            labels.insert(popularity.sample(&mut rng));
        }

        let mut tokens = Vec::new();
        for &l in &labels {
            let mut sig: Vec<usize> = (0..cfg.signature_tokens).collect();
            sig.shuffle(&mut rng);
            let keep = rng.gen_range(cfg.signature_tokens.div_ceil(2)..=cfg.signature_tokens);
            tokens.extend(sig[..keep].iter().map(|&s| signature_token(l, s)));
        }
        let noise = rng.gen_range(cfg.min_noise..=cfg.max_noise);
        tokens.extend((0..noise).map(|_| noise_token(rng.gen_range(0..cfg.num_noise_tokens()))));
        tokens.shuffle(&mut rng);

        documents.push(Document {
            doc_id: format!("syn-{i:03}"),
            tokens,
            labels,
        });
    }
    Ok(Corpus { documents })
}
