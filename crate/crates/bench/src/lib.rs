//! Seeded fixtures shared by the benchmarks.

use laha::data::EncodedDocument;
use laha::labelgraph::LabelEmbedding;
use laha::model::{ModelConfig, ModelParams};
use laha::rng::rng_for;
use laha::Matrix;

pub struct Fixture {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub labels: LabelEmbedding,
    pub doc: EncodedDocument,
}

/// Random model and a fully valid document of `n` tokens.
pub fn fixture(n: usize, d: usize, r: usize, k: usize) -> Fixture {
    let config = ModelConfig {
        d,
        r,
        d_a: r,
        k,
        max_len: n,
    };
    let vocab = 200;
    let mut rng = rng_for(17, &[n as u64, d as u64, r as u64, k as u64]);
    let params = ModelParams::random(&config, vocab, 0.1, &mut rng);
    let labels = LabelEmbedding {
        matrix: Matrix::random_uniform(r, k, -0.5, 0.5, &mut rng),
    };
    let doc = EncodedDocument {
        ids: (0..n).map(|i| 2 + i % (vocab - 2)).collect(),
        mask: vec![true; n],
    };
    Fixture {
        config,
        params,
        labels,
        doc,
    }
}

pub fn square(n: usize, seed: u64) -> Matrix {
    Matrix::random_uniform(n, n, -1.0, 1.0, &mut rng_for(seed, &[n as u64]))
}
