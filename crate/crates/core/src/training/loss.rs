use crate::numeric::{Tape, Var};
use crate::{Error, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before the log.
pub const PROB_CLAMP: f64 = 1e-7;

/// Mean over documents of the summed per-label binary cross-entropy.
pub fn bce_loss(y_hat: &[Vec<f64>], y: &[Vec<f64>]) -> Result<f64> {
    if y_hat.len() != y.len() {
        return Err(Error::Dimension {
            op: "bce_loss documents",
            left: (y_hat.len(), 1),
            right: (y.len(), 1),
        });
    }
    if y_hat.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (p, t) in y_hat.iter().zip(y) {
        if p.len() != t.len() {
            return Err(Error::Dimension {
                op: "bce_loss labels",
                left: (p.len(), 1),
                right: (t.len(), 1),
            });
        }
        total += p
            .iter()
            .zip(t)
            .map(|(&p, &y)| {
                let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>();
    }
    Ok(total / y_hat.len() as f64)
}

/// Differentiable counterpart of [`bce_loss`] over per-document probability rows.
pub fn bce_loss_on_tape(tape: &mut Tape<'_>, probs: &[Var], targets: &[Vec<f64>]) -> Result<Var> {
    if probs.len() != targets.len() || probs.is_empty() {
        return Err(Error::Dimension {
            op: "bce_loss_on_tape",
            left: (probs.len(), 1),
            right: (targets.len(), 1),
        });
    }
    let mut total: Option<Var> = None;
    for (&p, t) in probs.iter().zip(targets) {
        let l = tape.bce(p, t, PROB_CLAMP)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, l)?,
            None => l,
        });
    }
    let total = total.expect("non-empty");
    Ok(tape.scale(total, 1.0 / probs.len() as f64))
}
