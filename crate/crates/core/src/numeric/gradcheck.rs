use super::matrix::Matrix;
use super::tape::{Tape, Var};
use crate::{Error, Result};

/// Gradient magnitudes below this are compared absolutely rather than
/// relatively, so finite-difference round-off on near-zero entries does not
/// dominate the report.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(parameter index, flat entry index)` of the worst entry.
    pub worst_entry: Option<(usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub entries_checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale == 0.0 {
        return 0.0;
    }
    (analytic - numeric).abs() / scale.max(RELATIVE_ERROR_FLOOR)
}

fn evaluate<F>(params: &[Matrix], f: &F) -> Result<f64>
where
    F: Fn(&mut Tape<'_>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf_ref(p)).collect();
    let out = f(&mut tape, &vars)?;
    let value = tape.value(out);
    if value.shape() != (1, 1) {
        return Err(Error::Dimension {
            op: "grad_check (scalar function required)",
            left: value.shape(),
            right: (1, 1),
        });
    }
    let v = value[(0, 0)];
    if !v.is_finite() {
        return Err(Error::Numerical(format!("function value is {v}")));
    }
    Ok(v)
}

/// Compares reverse-mode gradients of the scalar function `f` against
/// central finite differences `(f(θ+ε) − f(θ−ε)) / 2ε` for every entry of
/// every parameter.
///
/// `f` receives a fresh tape and one leaf per parameter, in order, and must
/// return a 1×1 node.
pub fn grad_check<F>(params: &[Matrix], epsilon: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_>, &[Var]) -> Result<Var>,
{
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::Validation(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }

    let analytic: Vec<Matrix> = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.leaf_ref(p)).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out);
        if v.shape() == (1, 1) && !v[(0, 0)].is_finite() {
            return Err(Error::Numerical(format!("function value is {}", v[(0, 0)])));
        }
        let grads = tape.backward(out)?;
        vars.iter()
            .zip(params)
            .map(|(&v, p)| {
                grads
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| Matrix::zeros(p.rows(), p.cols()))
            })
            .collect()
    };

    let mut work: Vec<Matrix> = params.to_vec();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_entry: None,
        analytic: 0.0,
        numeric: 0.0,
        entries_checked: 0,
    };
    for p in 0..work.len() {
        for e in 0..work[p].data().len() {
            let orig = work[p].data()[e];
            work[p].data_mut()[e] = orig + epsilon;
            let plus = evaluate(&work, &f)?;
            work[p].data_mut()[e] = orig - epsilon;
            let minus = evaluate(&work, &f)?;
            work[p].data_mut()[e] = orig;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[p].data()[e];
            let err = relative_error(a, numeric);
            report.entries_checked += 1;
            if err > report.max_relative_error || report.worst_entry.is_none() {
                report.max_relative_error = err;
                report.worst_entry = Some((p, e));
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
