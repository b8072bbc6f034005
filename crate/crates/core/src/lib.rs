//! Label-aware document representation for extreme multi-label text
//! classification.
//!
//! The crate is organised bottom-up:
//!
//! - [`numeric`]: dense matrices and a reverse-mode differentiation tape.
//! - [`data`]: corpus ingestion, vocabulary, token encoding, word vectors.
//! - [`labelgraph`]: label co-occurrence graph, biased random walks and
//!   skip-gram label embeddings.
//! - [`model`]: Bi-LSTM encoder, self/interaction attention, fusion and the
//!   prediction layer.
//! - [`training`]: negative-sampled BCE training with Adam and checkpoints.
//! - [`metrics`]: P@k / nDCG@k, frequency-group reports, fusion histograms.
//! - [`synthetic`]: a seeded corpus generator with planted token/label structure.
//! - [`pipeline`]: glue used by the CLI and the ablation harness.

pub mod data;
pub mod error;
pub mod fsutil;
pub mod labelgraph;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod pipeline;
pub mod rng;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
pub use numeric::{Activation, Matrix};
