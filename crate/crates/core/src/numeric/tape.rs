//! Reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records every operation eagerly: each call computes its value
//! immediately and appends a node. [`Tape::backward`] then walks the nodes in
//! reverse, so each reachable node receives its gradient exactly once.
//! Leaves may borrow their value, which lets model parameters be placed on a
//! tape without copying.

use std::borrow::Cow;

use super::matrix::{matmul_nt_into, matmul_tn_into, Activation, Matrix};
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    /// `a (m×n) + b (m×1)` broadcast across columns.
    AddColumn(Var, Var),
    Hadamard(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Activate(Var, Activation),
    SoftmaxColumns(Var),
    Transpose(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SelectColumns(Var, Vec<usize>),
    SelectRows(Var, Vec<usize>),
    /// `a (m×n)` with column `j` scaled by `row[j]` (`row` is 1×n).
    ScaleColumns(Var, Var),
    Sum(Var),
    Bce {
        probs: Var,
        targets: Vec<f64>,
        clamp: f64,
    },
}

#[derive(Debug)]
struct Node<'a> {
    value: Cow<'a, Matrix>,
    op: Op,
}

/// Recording of a computation for reverse-mode differentiation.
#[derive(Debug, Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of `var`, or `None` if the output does not depend on it.
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Matrix> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Owned leaf (input, constant or parameter).
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Leaf borrowing its value for the lifetime of the tape.
    pub fn leaf_ref(&mut self, value: &'a Matrix) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn add_column(&mut self, a: Var, col: Var) -> Result<Var> {
        let (m, n) = self.shape(a);
        if self.shape(col) != (m, 1) {
            return Err(Error::Dimension {
                op: "add_column",
                left: (m, n),
                right: self.shape(col),
            });
        }
        let mut value = self.value(a).clone();
        let c = self.value(col);
        for r in 0..m {
            let b = c[(r, 0)];
            value.row_mut(r).iter_mut().for_each(|v| *v += b);
        }
        Ok(self.push(value, Op::AddColumn(a, col)))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(value, Op::Hadamard(a, b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::Dimension {
                op: "div",
                left: va.shape(),
                right: vb.shape(),
            });
        }
        let value = va.zip_map(vb, |x, y| x / y);
        Ok(self.push(value, Op::Div(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        self.push(value, Op::Scale(a, s))
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| 1.0 - v);
        self.push(value, Op::OneMinus(a))
    }

    pub fn activate(&mut self, a: Var, kind: Activation) -> Var {
        let value = self.value(a).activate(kind);
        self.push(value, Op::Activate(a, kind))
    }

    pub fn softmax_columns(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let value = self.value(a).softmax_columns(mask)?;
        Ok(self.push(value, Op::SoftmaxColumns(a)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::concat_rows(&values)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::concat_cols(&values)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    /// Rows `start..start + len` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let idx: Vec<usize> = (start..start + len).collect();
        let value = self.value(a).select_rows(&idx)?;
        Ok(self.push(value, Op::SliceRows(a, start)))
    }

    pub fn select_columns(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let value = self.value(a).select_columns(idx)?;
        Ok(self.push(value, Op::SelectColumns(a, idx.to_vec())))
    }

    pub fn select_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let value = self.value(a).select_rows(idx)?;
        Ok(self.push(value, Op::SelectRows(a, idx.to_vec())))
    }

    pub fn scale_columns(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.shape(a);
        if self.shape(row) != (1, n) {
            return Err(Error::Dimension {
                op: "scale_columns",
                left: (m, n),
                right: self.shape(row),
            });
        }
        let weights = self.value(row).data().to_vec();
        let mut value = self.value(a).clone();
        for r in 0..m {
            for (v, w) in value.row_mut(r).iter_mut().zip(&weights) {
                *v *= w;
            }
        }
        Ok(self.push(value, Op::ScaleColumns(a, row)))
    }

    /// Sum of all entries as a 1×1 matrix.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::filled(1, 1, self.value(a).sum());
        self.push(value, Op::Sum(a))
    }

    /// Summed binary cross-entropy of probabilities against 0/1 targets.
    ///
    /// Probabilities are clamped to `[clamp, 1 - clamp]`; the gradient is zero
    /// where the clamp is active.
    pub fn bce(&mut self, probs: Var, targets: &[f64], clamp: f64) -> Result<Var> {
        let p = self.value(probs);
        if p.data().len() != targets.len() {
            return Err(Error::Dimension {
                op: "bce",
                left: p.shape(),
                right: (targets.len(), 1),
            });
        }
        let loss: f64 = p
            .data()
            .iter()
            .zip(targets)
            .map(|(&p, &y)| {
                let p = p.clamp(clamp, 1.0 - clamp);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum();
        Ok(self.push(
            Matrix::filled(1, 1, loss),
            Op::Bce {
                probs,
                targets: targets.to_vec(),
                clamp,
            },
        ))
    }

    /// Back-propagates from a 1×1 output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.shape(output) != (1, 1) {
            return Err(Error::Dimension {
                op: "backward (scalar output required)",
                left: self.shape(output),
                right: (1, 1),
            });
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        let out = &*node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                // dA = G Bᵀ, dB = Aᵀ G
                matmul_nt_into(g, vb, accum(grads, *a, va.shape()));
                matmul_tn_into(va, g, accum(grads, *b, vb.shape()));
            }
            Op::Add(a, b) => {
                add_into(accum(grads, *a, g.shape()), g);
                add_into(accum(grads, *b, g.shape()), g);
            }
            Op::AddColumn(a, col) => {
                add_into(accum(grads, *a, g.shape()), g);
                let dc = accum(grads, *col, (g.rows(), 1));
                for r in 0..g.rows() {
                    dc[(r, 0)] += g.row(r).iter().sum::<f64>();
                }
            }
            Op::Hadamard(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let da = accum(grads, *a, va.shape());
                for ((d, &gi), &bi) in da.data_mut().iter_mut().zip(g.data()).zip(vb.data()) {
                    *d += gi * bi;
                }
                let db = accum(grads, *b, vb.shape());
                for ((d, &gi), &ai) in db.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                    *d += gi * ai;
                }
            }
            Op::Div(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let da = accum(grads, *a, va.shape());
                for ((d, &gi), &bi) in da.data_mut().iter_mut().zip(g.data()).zip(vb.data()) {
                    *d += gi / bi;
                }
                let db = accum(grads, *b, vb.shape());
                for (((d, &gi), &ai), &bi) in db
                    .data_mut()
                    .iter_mut()
                    .zip(g.data())
                    .zip(va.data())
                    .zip(vb.data())
                {
                    *d -= gi * ai / (bi * bi);
                }
            }
            Op::Scale(a, s) => {
                let da = accum(grads, *a, g.shape());
                for (d, &gi) in da.data_mut().iter_mut().zip(g.data()) {
                    *d += s * gi;
                }
            }
            Op::OneMinus(a) => {
                let da = accum(grads, *a, g.shape());
                for (d, &gi) in da.data_mut().iter_mut().zip(g.data()) {
                    *d -= gi;
                }
            }
            Op::Activate(a, kind) => {
                let da = accum(grads, *a, g.shape());
                for ((d, &gi), &y) in da.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                    *d += gi * kind.derivative_from_output(y);
                }
            }
            Op::SoftmaxColumns(a) => {
                let da = accum(grads, *a, g.shape());
                for c in 0..out.cols() {
                    let dot: f64 = (0..out.rows()).map(|r| out[(r, c)] * g[(r, c)]).sum();
                    for r in 0..out.rows() {
                        da[(r, c)] += out[(r, c)] * (g[(r, c)] - dot);
                    }
                }
            }
            Op::Transpose(a) => {
                let gt = g.transpose();
                add_into(accum(grads, *a, gt.shape()), &gt);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let shape = self.shape(p);
                    let dp = accum(grads, p, shape);
                    let len = shape.0 * shape.1;
                    for (d, &gi) in dp
                        .data_mut()
                        .iter_mut()
                        .zip(&g.data()[offset..offset + len])
                    {
                        *d += gi;
                    }
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let shape = self.shape(p);
                    let dp = accum(grads, p, shape);
                    for r in 0..shape.0 {
                        for (d, &gi) in dp
                            .row_mut(r)
                            .iter_mut()
                            .zip(&g.row(r)[offset..offset + shape.1])
                        {
                            *d += gi;
                        }
                    }
                    offset += shape.1;
                }
            }
            Op::SliceRows(a, start) => {
                let shape = self.shape(*a);
                let da = accum(grads, *a, shape);
                for r in 0..g.rows() {
                    for (d, &gi) in da.row_mut(start + r).iter_mut().zip(g.row(r)) {
                        *d += gi;
                    }
                }
            }
            Op::SelectColumns(a, idx) => {
                let shape = self.shape(*a);
                let da = accum(grads, *a, shape);
                for r in 0..g.rows() {
                    for (o, &j) in idx.iter().enumerate() {
                        da[(r, j)] += g[(r, o)];
                    }
                }
            }
            Op::SelectRows(a, idx) => {
                let shape = self.shape(*a);
                let da = accum(grads, *a, shape);
                for (o, &i) in idx.iter().enumerate() {
                    for (d, &gi) in da.row_mut(i).iter_mut().zip(g.row(o)) {
                        *d += gi;
                    }
                }
            }
            Op::ScaleColumns(a, row) => {
                let (va, vrow) = (self.value(*a), self.value(*row));
                let (m, n) = va.shape();
                let da = accum(grads, *a, (m, n));
                for r in 0..m {
                    for c in 0..n {
                        da[(r, c)] += g[(r, c)] * vrow[(0, c)];
                    }
                }
                let drow = accum(grads, *row, (1, n));
                for c in 0..n {
                    let mut s = 0.0;
                    for r in 0..m {
                        s += g[(r, c)] * va[(r, c)];
                    }
                    drow[(0, c)] += s;
                }
            }
            Op::Sum(a) => {
                let shape = self.shape(*a);
                let s = g[(0, 0)];
                let da = accum(grads, *a, shape);
                da.data_mut().iter_mut().for_each(|d| *d += s);
            }
            Op::Bce {
                probs,
                targets,
                clamp,
            } => {
                let vp = self.value(*probs);
                let s = g[(0, 0)];
                let dp = accum(grads, *probs, vp.shape());
                for ((d, &p), &y) in dp.data_mut().iter_mut().zip(vp.data()).zip(targets) {
                    if p > *clamp && p < 1.0 - clamp {
                        *d += s * (p - y) / (p * (1.0 - p));
                    }
                }
            }
        }
    }
}

fn accum(grads: &mut [Option<Matrix>], v: Var, shape: (usize, usize)) -> &mut Matrix {
    grads[v.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1))
}

fn add_into(dst: &mut Matrix, src: &Matrix) {
    for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let x = Matrix::filled(1, 1, 3.0);
        let mut tape = Tape::new();
        let v = tape.leaf_ref(&x);
        let sq = tape.hadamard(v, v).unwrap();
        let grads = tape.backward(sq).unwrap();
        assert_eq!(grads.get(v).unwrap()[(0, 0)], 6.0);
    }

    #[test]
    fn unreachable_nodes_have_no_gradient() {
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::filled(2, 2, 1.0));
        let b = tape.leaf(Matrix::filled(2, 2, 2.0));
        let s = tape.sum(a);
        let grads = tape.backward(s).unwrap();
        assert!(grads.get(b).is_none());
        assert_eq!(grads.get(a).unwrap(), &Matrix::filled(2, 2, 1.0));
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::zeros(2, 1));
        assert!(tape.backward(a).is_err());
    }

    #[test]
    fn bce_of_half_is_ln2_per_label() {
        let mut tape = Tape::new();
        let p = tape.leaf(Matrix::filled(1, 3, 0.5));
        let l = tape.bce(p, &[1.0, 0.0, 1.0], 1e-7).unwrap();
        assert!((tape.value(l)[(0, 0)] - 3.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn bce_length_mismatch() {
        let mut tape = Tape::new();
        let p = tape.leaf(Matrix::filled(1, 3, 0.5));
        assert!(matches!(
            tape.bce(p, &[1.0], 1e-7),
            Err(Error::Dimension { .. })
        ));
    }
}
