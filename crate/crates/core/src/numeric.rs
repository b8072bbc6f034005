//! Dense matrix arithmetic and reverse-mode differentiation.
//!
//! Every differentiable operation the model uses lives on [`Tape`]; the plain
//! [`Matrix`] methods are the non-recording counterparts used for inference
//! and reporting.

mod gradcheck;
mod matrix;
mod tape;

pub use gradcheck::{grad_check, relative_error, GradCheckReport, RELATIVE_ERROR_FLOOR};
pub use matrix::{sigmoid, Activation, Matrix};
pub use tape::{Gradients, Tape, Var};
