//! Dense `f64` tensors, a reverse-mode tape, Adam, and a finite-difference
//! gradient checker.

mod adam;
mod gradcheck;
pub mod rng;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use rng::{Rng, RngState};
pub use tape::{softmax_rows, AttentionMap, Tape, Var, LAYER_NORM_EPS};
pub use tensor::{ParamStore, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("index {index} out of range {bound} in {op}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("parameter {0} has no gradient buffer")]
    MissingGrad(String),
    #[error("unknown parameter {0}")]
    MissingParam(String),
}
