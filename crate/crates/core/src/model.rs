//! Label-aware hybrid-attention model.
//!
//! A document flows through a Bi-LSTM encoder, then two attention routes
//! produce one representation per (document, label) pair: self-attention over
//! the encoder states and interaction-attention against projected label
//! embeddings. A learned gate mixes the two per label before a two-layer
//! prediction head.

mod export;
mod forward;
mod params;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use export::{export_attention, AttentionReport, LabelAttention, TokenWeight};
pub use forward::{
    bilstm_forward, forward, forward_on_tape, fuse, interaction_attention,
    interaction_scores_block, predict, self_attention, ForwardTrace, TapeForward,
};
pub use params::{ModelParams, ParamVars, PARAM_NAMES};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Word-vector dimension.
    pub d: usize,
    /// LSTM hidden size per direction; also the label-embedding dimension.
    pub r: usize,
    /// Self-attention hidden size.
    pub d_a: usize,
    /// Number of labels.
    pub k: usize,
    pub max_len: usize,
}

impl ModelConfig {
    pub fn new(k: usize) -> Self {
        ModelConfig {
            d: 300,
            r: 256,
            d_a: 256,
            k,
            max_len: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.r == 0 || self.d_a == 0 || self.k == 0 || self.max_len == 0 {
            return Err(Error::Validation(format!(
                "model dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Which attention routes feed the label-aware representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Self-attention only.
    #[serde(rename = "sa")]
    SelfOnly,
    /// Interaction-attention only.
    #[serde(rename = "ia")]
    InteractionOnly,
    /// Both routes averaged with fixed equal weights.
    #[serde(rename = "sa+ia")]
    Averaged,
    /// Both routes mixed by the learned fusion gate.
    #[serde(rename = "laha")]
    Fused,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::SelfOnly,
        Variant::InteractionOnly,
        Variant::Averaged,
        Variant::Fused,
    ];

    pub fn uses_self(self) -> bool {
        !matches!(self, Variant::InteractionOnly)
    }

    /// Whether the variant needs label embeddings.
    pub fn uses_interaction(self) -> bool {
        !matches!(self, Variant::SelfOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::SelfOnly => "sa",
            Variant::InteractionOnly => "ia",
            Variant::Averaged => "sa+ia",
            Variant::Fused => "laha",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sa" => Ok(Variant::SelfOnly),
            "ia" => Ok(Variant::InteractionOnly),
            "sa+ia" => Ok(Variant::Averaged),
            "laha" => Ok(Variant::Fused),
            other => Err(Error::Validation(format!(
                "unknown variant {other:?} (expected sa, ia, sa+ia or laha)"
            ))),
        }
    }
}
