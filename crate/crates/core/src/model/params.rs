use rand::Rng;

use super::ModelConfig;
use crate::data::WordVectors;
use crate::numeric::{Matrix, Tape, Var};
use crate::rng::rng_for;
use crate::{Error, Result};

/// Every trainable tensor of the model.
///
/// LSTM gate blocks are stacked `[input; forget; cell; output]`, each `r`
/// rows tall.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embedding: Matrix,
    pub fwd_wx: Matrix,
    pub fwd_wh: Matrix,
    pub fwd_b: Matrix,
    pub bwd_wx: Matrix,
    pub bwd_wh: Matrix,
    pub bwd_b: Matrix,
    pub w_s1: Matrix,
    pub w_s2: Matrix,
    pub w_q: Matrix,
    pub fuse_self_w: Matrix,
    pub fuse_self_b: Matrix,
    pub fuse_inter_w: Matrix,
    pub fuse_inter_b: Matrix,
    pub w_f: Matrix,
    pub w_o: Matrix,
    pub b_o: Matrix,
}

/// Tensor names in canonical order (checkpoints, optimiser state).
pub const PARAM_NAMES: [&str; 17] = [
    "embedding",
    "fwd_wx",
    "fwd_wh",
    "fwd_b",
    "bwd_wx",
    "bwd_wh",
    "bwd_b",
    "w_s1",
    "w_s2",
    "w_q",
    "fuse_self_w",
    "fuse_self_b",
    "fuse_inter_w",
    "fuse_inter_b",
    "w_f",
    "w_o",
    "b_o",
];

impl ModelParams {
    /// Xavier-uniform weights, zero biases, word vectors as the embedding.
    pub fn init(config: &ModelConfig, word_vectors: &WordVectors, seed: u64) -> Result<Self> {
        config.validate()?;
        if word_vectors.dim() != config.d {
            return Err(Error::Validation(format!(
                "word vectors have dimension {}, model expects {}",
                word_vectors.dim(),
                config.d
            )));
        }
        let ModelConfig { d, r, d_a, k, .. } = *config;
        let mut rng = rng_for(seed, &[0x9a7a]);
        let mut xavier = |rows, cols| Matrix::xavier(rows, cols, &mut rng);
        Ok(ModelParams {
            embedding: word_vectors.table.clone(),
            fwd_wx: xavier(4 * r, d),
            fwd_wh: xavier(4 * r, r),
            fwd_b: Matrix::zeros(4 * r, 1),
            bwd_wx: xavier(4 * r, d),
            bwd_wh: xavier(4 * r, r),
            bwd_b: Matrix::zeros(4 * r, 1),
            w_s1: xavier(d_a, 2 * r),
            w_s2: xavier(k, d_a),
            w_q: xavier(r, r),
            fuse_self_w: xavier(1, 2 * r),
            fuse_self_b: Matrix::zeros(1, 1),
            fuse_inter_w: xavier(1, 2 * r),
            fuse_inter_b: Matrix::zeros(1, 1),
            w_f: xavier(r, 2 * r),
            w_o: xavier(1, r),
            b_o: Matrix::zeros(1, 1),
        })
    }

    /// Same shapes as `init`, but every weight drawn from uniform(−scale, scale).
    /// Handy for tests that need generic (non-degenerate) values everywhere.
    pub fn random<R: Rng + ?Sized>(
        config: &ModelConfig,
        vocab_size: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let ModelConfig { d, r, d_a, k, .. } = *config;
        let mut u = |rows, cols| Matrix::random_uniform(rows, cols, -scale, scale, rng);
        let mut p = ModelParams {
            embedding: u(vocab_size, d),
            fwd_wx: u(4 * r, d),
            fwd_wh: u(4 * r, r),
            fwd_b: u(4 * r, 1),
            bwd_wx: u(4 * r, d),
            bwd_wh: u(4 * r, r),
            bwd_b: u(4 * r, 1),
            w_s1: u(d_a, 2 * r),
            w_s2: u(k, d_a),
            w_q: u(r, r),
            fuse_self_w: u(1, 2 * r),
            fuse_self_b: u(1, 1),
            fuse_inter_w: u(1, 2 * r),
            fuse_inter_b: u(1, 1),
            w_f: u(r, 2 * r),
            w_o: u(1, r),
            b_o: u(1, 1),
        };
        p.embedding.row_mut(crate::data::PAD).fill(0.0);
        p
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn tensors(&self) -> [(&'static str, &Matrix); 17] {
        [
            ("embedding", &self.embedding),
            ("fwd_wx", &self.fwd_wx),
            ("fwd_wh", &self.fwd_wh),
            ("fwd_b", &self.fwd_b),
            ("bwd_wx", &self.bwd_wx),
            ("bwd_wh", &self.bwd_wh),
            ("bwd_b", &self.bwd_b),
            ("w_s1", &self.w_s1),
            ("w_s2", &self.w_s2),
            ("w_q", &self.w_q),
            ("fuse_self_w", &self.fuse_self_w),
            ("fuse_self_b", &self.fuse_self_b),
            ("fuse_inter_w", &self.fuse_inter_w),
            ("fuse_inter_b", &self.fuse_inter_b),
            ("w_f", &self.w_f),
            ("w_o", &self.w_o),
            ("b_o", &self.b_o),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Matrix); 17] {
        [
            ("embedding", &mut self.embedding),
            ("fwd_wx", &mut self.fwd_wx),
            ("fwd_wh", &mut self.fwd_wh),
            ("fwd_b", &mut self.fwd_b),
            ("bwd_wx", &mut self.bwd_wx),
            ("bwd_wh", &mut self.bwd_wh),
            ("bwd_b", &mut self.bwd_b),
            ("w_s1", &mut self.w_s1),
            ("w_s2", &mut self.w_s2),
            ("w_q", &mut self.w_q),
            ("fuse_self_w", &mut self.fuse_self_w),
            ("fuse_self_b", &mut self.fuse_self_b),
            ("fuse_inter_w", &mut self.fuse_inter_w),
            ("fuse_inter_b", &mut self.fuse_inter_b),
            ("w_f", &mut self.w_f),
            ("w_o", &mut self.w_o),
            ("b_o", &mut self.b_o),
        ]
    }

    /// Rebuilds parameters from tensors listed in [`PARAM_NAMES`] order.
    pub fn from_tensors(mut tensors: Vec<Matrix>) -> Result<Self> {
        if tensors.len() != PARAM_NAMES.len() {
            return Err(Error::Format(format!(
                "expected {} parameter tensors, found {}",
                PARAM_NAMES.len(),
                tensors.len()
            )));
        }
        let mut next = || tensors.remove(0);
        Ok(ModelParams {
            embedding: next(),
            fwd_wx: next(),
            fwd_wh: next(),
            fwd_b: next(),
            bwd_wx: next(),
            bwd_wh: next(),
            bwd_b: next(),
            w_s1: next(),
            w_s2: next(),
            w_q: next(),
            fuse_self_w: next(),
            fuse_self_b: next(),
            fuse_inter_w: next(),
            fuse_inter_b: next(),
            w_f: next(),
            w_o: next(),
            b_o: next(),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let tensors = self
            .tensors()
            .iter()
            .map(|(_, m)| Matrix::zeros(m.rows(), m.cols()))
            .collect();
        ModelParams::from_tensors(tensors).expect("same tensor count")
    }

    /// Expected shape of every tensor for `config` and `vocab_size`.
    pub fn expected_shapes(config: &ModelConfig, vocab_size: usize) -> [(usize, usize); 17] {
        let ModelConfig { d, r, d_a, k, .. } = *config;
        [
            (vocab_size, d),
            (4 * r, d),
            (4 * r, r),
            (4 * r, 1),
            (4 * r, d),
            (4 * r, r),
            (4 * r, 1),
            (d_a, 2 * r),
            (k, d_a),
            (r, r),
            (1, 2 * r),
            (1, 1),
            (1, 2 * r),
            (1, 1),
            (r, 2 * r),
            (1, r),
            (1, 1),
        ]
    }

    /// Checks every shape against `config` and that all entries are finite.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let expected = Self::expected_shapes(config, self.vocab_size());
        for ((name, m), want) in self.tensors().iter().zip(expected) {
            if m.shape() != want {
                return Err(Error::Validation(format!(
                    "parameter {name} has shape {:?}, config implies {want:?}",
                    m.shape()
                )));
            }
            if !m.is_finite() {
                return Err(Error::Numerical(format!("parameter {name} is not finite")));
            }
        }
        Ok(())
    }

    /// Places every tensor on `tape` as a borrowed leaf.
    pub fn on_tape<'a>(&'a self, tape: &mut Tape<'a>) -> ParamVars {
        let vars: Vec<Var> = self
            .tensors()
            .iter()
            .map(|(_, m)| tape.leaf_ref(m))
            .collect();
        ParamVars::from_slice(&vars)
    }
}

/// Tape handles for each parameter, in [`PARAM_NAMES`] order.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub embedding: Var,
    pub fwd_wx: Var,
    pub fwd_wh: Var,
    pub fwd_b: Var,
    pub bwd_wx: Var,
    pub bwd_wh: Var,
    pub bwd_b: Var,
    pub w_s1: Var,
    pub w_s2: Var,
    pub w_q: Var,
    pub fuse_self_w: Var,
    pub fuse_self_b: Var,
    pub fuse_inter_w: Var,
    pub fuse_inter_b: Var,
    pub w_f: Var,
    pub w_o: Var,
    pub b_o: Var,
}

impl ParamVars {
    /// Panics unless `v` holds exactly one handle per parameter.
    pub fn from_slice(v: &[Var]) -> Self {
        assert_eq!(v.len(), PARAM_NAMES.len(), "one Var per parameter");
        ParamVars {
            embedding: v[0],
            fwd_wx: v[1],
            fwd_wh: v[2],
            fwd_b: v[3],
            bwd_wx: v[4],
            bwd_wh: v[5],
            bwd_b: v[6],
            w_s1: v[7],
            w_s2: v[8],
            w_q: v[9],
            fuse_self_w: v[10],
            fuse_self_b: v[11],
            fuse_inter_w: v[12],
            fuse_inter_b: v[13],
            w_f: v[14],
            w_o: v[15],
            b_o: v[16],
        }
    }

    pub fn to_vec(&self) -> Vec<Var> {
        vec![
            self.embedding,
            self.fwd_wx,
            self.fwd_wh,
            self.fwd_b,
            self.bwd_wx,
            self.bwd_wh,
            self.bwd_b,
            self.w_s1,
            self.w_s2,
            self.w_q,
            self.fuse_self_w,
            self.fuse_self_b,
            self.fuse_inter_w,
            self.fuse_inter_b,
            self.w_f,
            self.w_o,
            self.b_o,
        ]
    }
}
