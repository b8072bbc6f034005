//! Label co-occurrence graph and structure-preserving label embeddings.
//!
//! Labels sharing at least one training document are connected, weighted by
//! the number of shared documents. Second-order biased random walks over the
//! graph feed a skip-gram model with negative sampling, producing one
//! `r`-dimensional vector per label.

mod graph;
mod io;
mod skipgram;
mod walk;

pub use graph::{build_cooccurrence_graph, GraphSummary, LabelGraph};
pub use io::{
    load_embedding, load_graph, read_embedding, save_embedding, save_graph, write_embedding,
};
pub use skipgram::{train_skipgram, LabelEmbedding, SkipGramConfig};
pub use walk::{next_node, sample_walks, WalkConfig};
