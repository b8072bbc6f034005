use super::params::{ModelParams, ParamVars};
use super::Variant;
use crate::data::EncodedDocument;
use crate::labelgraph::LabelEmbedding;
use crate::numeric::{Activation, Matrix, Tape, Var};
use crate::{Error, Result};

/// Tape handles for the intermediate tensors of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct TapeForward {
    /// `d × n` input embeddings.
    pub embedded: Var,
    pub h_fwd: Var,
    pub h_bwd: Var,
    pub h: Var,
    pub a_self: Option<Var>,
    pub c_self: Option<Var>,
    pub a_inter: Option<Var>,
    pub c_inter: Option<Var>,
    pub alpha: Option<Var>,
    pub beta: Option<Var>,
    pub c: Var,
    pub y_hat: Var,
}

/// Values of every intermediate tensor for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub variant: Variant,
    /// Labels scored, in column order of the per-label tensors.
    pub labels: Vec<usize>,
    pub mask: Vec<bool>,
    /// `r × n` forward LSTM states.
    pub h_fwd: Matrix,
    /// `r × n` backward LSTM states.
    pub h_bwd: Matrix,
    /// `2r × n` stacked states.
    pub h: Matrix,
    /// `n × k′` self-attention weights.
    pub a_self: Option<Matrix>,
    pub c_self: Option<Matrix>,
    /// `n × k′` interaction-attention weights.
    pub a_inter: Option<Matrix>,
    pub c_inter: Option<Matrix>,
    /// Per-label weight of the self-attention route (`SA+IA`: fixed 0.5).
    pub alpha: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    /// `2r × k′` label-aware representation.
    pub c: Matrix,
    pub y_hat: Vec<f64>,
}

impl ForwardTrace {
    /// `n × k′` word weights actually used to build `c`: the convex
    /// combination of the two attention matrices under the variant's mixing.
    pub fn fused_attention(&self) -> Matrix {
        match (&self.a_self, &self.a_inter, &self.alpha, &self.beta) {
            (Some(a_s), Some(a_i), Some(alpha), Some(beta)) => {
                let mut out = Matrix::zeros(a_s.rows(), a_s.cols());
                for t in 0..a_s.rows() {
                    for j in 0..a_s.cols() {
                        out[(t, j)] = alpha[j] * a_s[(t, j)] + beta[j] * a_i[(t, j)];
                    }
                }
                out
            }
            (Some(a_s), None, _, _) => a_s.clone(),
            (None, Some(a_i), _, _) => a_i.clone(),
            _ => unreachable!("a trace always carries at least one attention route"),
        }
    }
}

fn check_subset(subset: &[usize], k: usize) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::Validation("label subset is empty".into()));
    }
    if let Some(&bad) = subset.iter().find(|&&l| l >= k) {
        return Err(Error::Validation(format!(
            "label {bad} outside label space of {k}"
        )));
    }
    Ok(())
}

/// One direction of the LSTM over the valid positions, in `order`.
/// Invalid positions get zero states.
fn lstm_direction(
    tape: &mut Tape<'_>,
    embedded: Var,
    wx: Var,
    wh: Var,
    b: Var,
    mask: &[bool],
    reverse: bool,
) -> Result<Var> {
    let r = tape.shape(wh).1;
    if tape.shape(wx).0 != 4 * r || tape.shape(b) != (4 * r, 1) {
        return Err(Error::Dimension {
            op: "lstm gate weights",
            left: tape.shape(wx),
            right: tape.shape(wh),
        });
    }
    let n = mask.len();
    let projected = tape.matmul(wx, embedded)?;
    let pre = tape.add_column(projected, b)?;

    let mut positions: Vec<usize> = (0..n).filter(|&t| mask[t]).collect();
    if reverse {
        positions.reverse();
    }
    let zero = tape.leaf(Matrix::zeros(r, 1));
    let mut columns = vec![zero; n];
    let mut state: Option<(Var, Var)> = None;
    for t in positions {
        let x = tape.select_columns(pre, &[t])?;
        let gates = match state {
            Some((h, _)) => {
                let rec = tape.matmul(wh, h)?;
                tape.add(x, rec)?
            }
            None => x,
        };
        let i = tape.slice_rows(gates, 0, r)?;
        let f = tape.slice_rows(gates, r, r)?;
        let g = tape.slice_rows(gates, 2 * r, r)?;
        let o = tape.slice_rows(gates, 3 * r, r)?;
        let i = tape.activate(i, Activation::Sigmoid);
        let f = tape.activate(f, Activation::Sigmoid);
        let g = tape.activate(g, Activation::Tanh);
        let o = tape.activate(o, Activation::Sigmoid);
        let ig = tape.hadamard(i, g)?;
        let c = match state {
            Some((_, c_prev)) => {
                let fc = tape.hadamard(f, c_prev)?;
                tape.add(fc, ig)?
            }
            None => ig,
        };
        let c_act = tape.activate(c, Activation::Tanh);
        let h = tape.hadamard(o, c_act)?;
        columns[t] = h;
        state = Some((h, c));
    }
    tape.concat_cols(&columns)
}

fn bilstm_on_tape(
    tape: &mut Tape<'_>,
    pv: &ParamVars,
    embedded: Var,
    mask: &[bool],
) -> Result<(Var, Var, Var)> {
    if tape.shape(embedded).1 != mask.len() {
        return Err(Error::Dimension {
            op: "bilstm mask",
            left: tape.shape(embedded),
            right: (mask.len(), 1),
        });
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::Degenerate("document has no valid tokens".into()));
    }
    let h_fwd = lstm_direction(tape, embedded, pv.fwd_wx, pv.fwd_wh, pv.fwd_b, mask, false)?;
    let h_bwd = lstm_direction(tape, embedded, pv.bwd_wx, pv.bwd_wh, pv.bwd_b, mask, true)?;
    let h = tape.concat_rows(&[h_fwd, h_bwd])?;
    Ok((h_fwd, h_bwd, h))
}

fn self_attention_on_tape(
    tape: &mut Tape<'_>,
    h: Var,
    w_s1: Var,
    w_s2: Var,
    subset: &[usize],
    mask: &[bool],
) -> Result<(Var, Var)> {
    let pre = tape.matmul(w_s1, h)?;
    let t = tape.activate(pre, Activation::Tanh);
    let w = tape.select_rows(w_s2, subset)?;
    let scores = tape.matmul(w, t)?;
    let scores = tape.transpose(scores);
    let a = tape.softmax_columns(scores, Some(mask))?;
    let c = tape.matmul(h, a)?;
    Ok((a, c))
}

#[allow(clippy::too_many_arguments)]
fn interaction_attention_on_tape(
    tape: &mut Tape<'_>,
    h_fwd: Var,
    h_bwd: Var,
    h: Var,
    labels: Var,
    w_q: Var,
    subset: &[usize],
    mask: &[bool],
) -> Result<(Var, Var)> {
    let l = tape.select_columns(labels, subset)?;
    let q = tape.matmul(w_q, l)?;
    let keys = tape.add(h_fwd, h_bwd)?;
    let keys = tape.transpose(keys);
    let m = tape.matmul(keys, q)?;
    let a = tape.softmax_columns(m, Some(mask))?;
    let c = tape.matmul(h, a)?;
    Ok((a, c))
}

/// Returns `(C, α, β)` with `α` and `β` as 1×k′ rows.
#[allow(clippy::too_many_arguments)]
fn fuse_on_tape(
    tape: &mut Tape<'_>,
    c_self: Var,
    c_inter: Var,
    self_w: Var,
    self_b: Var,
    inter_w: Var,
    inter_b: Var,
) -> Result<(Var, Var, Var)> {
    let a = tape.matmul(self_w, c_self)?;
    let a = tape.add_column(a, self_b)?;
    let a = tape.activate(a, Activation::Sigmoid);
    let b = tape.matmul(inter_w, c_inter)?;
    let b = tape.add_column(b, inter_b)?;
    let b = tape.activate(b, Activation::Sigmoid);
    let total = tape.add(a, b)?;
    let alpha = tape.div(a, total)?;
    let beta = tape.one_minus(alpha);
    let cs = tape.scale_columns(c_self, alpha)?;
    let ci = tape.scale_columns(c_inter, beta)?;
    let c = tape.add(cs, ci)?;
    Ok((c, alpha, beta))
}

fn predict_on_tape(tape: &mut Tape<'_>, c: Var, w_f: Var, w_o: Var, b_o: Var) -> Result<Var> {
    let hidden = tape.matmul(w_f, c)?;
    let hidden = tape.activate(hidden, Activation::Relu);
    let logit = tape.matmul(w_o, hidden)?;
    let logit = tape.add_column(logit, b_o)?;
    Ok(tape.activate(logit, Activation::Sigmoid))
}

/// Records the full forward computation on `tape`.
///
/// `embedded` is the `d × n` input; `labels` the `r × k` label embedding
/// (required by every variant except self-attention only).
#[allow(clippy::too_many_arguments)]
pub fn forward_on_tape(
    tape: &mut Tape<'_>,
    pv: &ParamVars,
    embedded: Var,
    mask: &[bool],
    labels: Option<Var>,
    variant: Variant,
    subset: &[usize],
    k: usize,
) -> Result<TapeForward> {
    check_subset(subset, k)?;
    let (h_fwd, h_bwd, h) = bilstm_on_tape(tape, pv, embedded, mask)?;

    let (a_self, c_self) = if variant.uses_self() {
        let (a, c) = self_attention_on_tape(tape, h, pv.w_s1, pv.w_s2, subset, mask)?;
        (Some(a), Some(c))
    } else {
        (None, None)
    };
    let (a_inter, c_inter) = if variant.uses_interaction() {
        let labels = labels.ok_or_else(|| {
            Error::Validation(format!("variant {variant} requires label embeddings"))
        })?;
        let (a, c) =
            interaction_attention_on_tape(tape, h_fwd, h_bwd, h, labels, pv.w_q, subset, mask)?;
        (Some(a), Some(c))
    } else {
        (None, None)
    };

    let (c, alpha, beta) = match (variant, c_self, c_inter) {
        (Variant::SelfOnly, Some(cs), _) => (cs, None, None),
        (Variant::InteractionOnly, _, Some(ci)) => (ci, None, None),
        (Variant::Averaged, Some(cs), Some(ci)) => {
            let sum = tape.add(cs, ci)?;
            (tape.scale(sum, 0.5), None, None)
        }
        (Variant::Fused, Some(cs), Some(ci)) => {
            let (c, alpha, beta) = fuse_on_tape(
                tape,
                cs,
                ci,
                pv.fuse_self_w,
                pv.fuse_self_b,
                pv.fuse_inter_w,
                pv.fuse_inter_b,
            )?;
            (c, Some(alpha), Some(beta))
        }
        _ => unreachable!("routes computed per variant above"),
    };
    let y_hat = predict_on_tape(tape, c, pv.w_f, pv.w_o, pv.b_o)?;
    Ok(TapeForward {
        embedded,
        h_fwd,
        h_bwd,
        h,
        a_self,
        c_self,
        a_inter,
        c_inter,
        alpha,
        beta,
        c,
        y_hat,
    })
}

/// `d × n` matrix whose column `t` is the embedding row of `ids[t]`.
pub(crate) fn gather_embeddings(table: &Matrix, ids: &[usize]) -> Result<Matrix> {
    Ok(table.select_rows(ids)?.transpose())
}

/// Runs the model on one encoded document over `subset` labels.
pub fn forward(
    doc: &EncodedDocument,
    params: &ModelParams,
    label_embedding: Option<&LabelEmbedding>,
    variant: Variant,
    subset: &[usize],
) -> Result<ForwardTrace> {
    let k = params.w_s2.rows();
    if let Some(l) = label_embedding {
        if l.num_labels() != k || l.dim() != params.w_q.rows() {
            return Err(Error::Dimension {
                op: "label embedding",
                left: l.matrix.shape(),
                right: (params.w_q.rows(), k),
            });
        }
    }
    let mut tape = Tape::new();
    let pv = params.on_tape(&mut tape);
    let embedded = tape.leaf(gather_embeddings(&params.embedding, &doc.ids)?);
    let labels = label_embedding.map(|l| tape.leaf_ref(&l.matrix));
    let f = forward_on_tape(
        &mut tape, &pv, embedded, &doc.mask, labels, variant, subset, k,
    )?;

    let get = |v: Var| tape.value(v).clone();
    let row = |v: Var| tape.value(v).data().to_vec();
    let (alpha, beta) = match variant {
        Variant::Averaged => (Some(vec![0.5; subset.len()]), Some(vec![0.5; subset.len()])),
        _ => (f.alpha.map(row), f.beta.map(row)),
    };
    Ok(ForwardTrace {
        variant,
        labels: subset.to_vec(),
        mask: doc.mask.clone(),
        h_fwd: get(f.h_fwd),
        h_bwd: get(f.h_bwd),
        h: get(f.h),
        a_self: f.a_self.map(get),
        c_self: f.c_self.map(get),
        a_inter: f.a_inter.map(get),
        c_inter: f.c_inter.map(get),
        alpha,
        beta,
        c: get(f.c),
        y_hat: row(f.y_hat),
    })
}

/// Bi-LSTM encoder: returns `(H_fwd, H_bwd, H)` for a `d × n` input.
pub fn bilstm_forward(
    embedded: &Matrix,
    mask: &[bool],
    params: &ModelParams,
) -> Result<(Matrix, Matrix, Matrix)> {
    let mut tape = Tape::new();
    let pv = params.on_tape(&mut tape);
    let e = tape.leaf_ref(embedded);
    let (f, b, h) = bilstm_on_tape(&mut tape, &pv, e, mask)?;
    Ok((
        tape.value(f).clone(),
        tape.value(b).clone(),
        tape.value(h).clone(),
    ))
}

/// Self-attention weights `A` (`n × k′`) and representations `C = H A`.
pub fn self_attention(
    h: &Matrix,
    w_s1: &Matrix,
    w_s2: &Matrix,
    subset: &[usize],
    mask: &[bool],
) -> Result<(Matrix, Matrix)> {
    check_subset(subset, w_s2.rows())?;
    let mut tape = Tape::new();
    let (vh, v1, v2) = (tape.leaf_ref(h), tape.leaf_ref(w_s1), tape.leaf_ref(w_s2));
    let (a, c) = self_attention_on_tape(&mut tape, vh, v1, v2, subset, mask)?;
    Ok((tape.value(a).clone(), tape.value(c).clone()))
}

/// Interaction-attention weights `A` (`n × k′`) and representations `C = H A`.
///
/// `labels` is the `r × k` label embedding.
pub fn interaction_attention(
    h_fwd: &Matrix,
    h_bwd: &Matrix,
    labels: &Matrix,
    w_q: &Matrix,
    subset: &[usize],
    mask: &[bool],
) -> Result<(Matrix, Matrix)> {
    check_subset(subset, labels.cols())?;
    if labels.rows() != w_q.cols() {
        return Err(Error::Dimension {
            op: "interaction_attention label embedding",
            left: labels.shape(),
            right: w_q.shape(),
        });
    }
    let h = Matrix::concat_rows(&[h_fwd, h_bwd])?;
    let mut tape = Tape::new();
    let (vf, vb, vh) = (tape.leaf_ref(h_fwd), tape.leaf_ref(h_bwd), tape.leaf(h));
    let (vl, vq) = (tape.leaf_ref(labels), tape.leaf_ref(w_q));
    let (a, c) = interaction_attention_on_tape(&mut tape, vf, vb, vh, vl, vq, subset, mask)?;
    Ok((tape.value(a).clone(), tape.value(c).clone()))
}

/// Matching scores computed literally as `[H_fwdᵀ H_bwdᵀ] · [Q; Q]`.
pub fn interaction_scores_block(h_fwd: &Matrix, h_bwd: &Matrix, q: &Matrix) -> Result<Matrix> {
    let keys = Matrix::concat_cols(&[&h_fwd.transpose(), &h_bwd.transpose()])?;
    let queries = Matrix::concat_rows(&[q, q])?;
    keys.matmul(&queries)
}

/// Fusion gate: returns `(C, α, β)` for the two `2r × k′` representations.
pub fn fuse(
    c_self: &Matrix,
    c_inter: &Matrix,
    self_w: &Matrix,
    self_b: f64,
    inter_w: &Matrix,
    inter_b: f64,
) -> Result<(Matrix, Vec<f64>, Vec<f64>)> {
    if c_self.shape() != c_inter.shape() {
        return Err(Error::Dimension {
            op: "fuse",
            left: c_self.shape(),
            right: c_inter.shape(),
        });
    }
    let mut tape = Tape::new();
    let (cs, ci) = (tape.leaf_ref(c_self), tape.leaf_ref(c_inter));
    let (sw, iw) = (tape.leaf_ref(self_w), tape.leaf_ref(inter_w));
    let sb = tape.leaf(Matrix::filled(1, 1, self_b));
    let ib = tape.leaf(Matrix::filled(1, 1, inter_b));
    let (c, alpha, beta) = fuse_on_tape(&mut tape, cs, ci, sw, sb, iw, ib)?;
    Ok((
        tape.value(c).clone(),
        tape.value(alpha).data().to_vec(),
        tape.value(beta).data().to_vec(),
    ))
}

/// Prediction head: `σ(W_o · ReLU(W_f C) + b)` per label column.
pub fn predict(c: &Matrix, w_f: &Matrix, w_o: &Matrix, bias: f64) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let (vc, vf, vo) = (tape.leaf_ref(c), tape.leaf_ref(w_f), tape.leaf_ref(w_o));
    let vb = tape.leaf(Matrix::filled(1, 1, bias));
    let y = predict_on_tape(&mut tape, vc, vf, vo, vb)?;
    Ok(tape.value(y).data().to_vec())
}
