//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A forward pass records every operation on a [`Tape`]; [`Tape::backward`]
//! then walks the record in reverse, accumulating vector-Jacobian products.
//! Tapes are rebuilt for every forward pass.

mod check;
mod ops;
mod tape;
mod tensor;

pub use check::finite_diff_grad;
pub use ops::{forward_op, OpKind};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {shapes:?}")]
    ShapeMismatch {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
    },
    #[error("{op} takes {expected} input(s), got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("shape {shape:?} does not hold {len} values")]
    BadLength { shape: Vec<usize>, len: usize },
    #[error("rows of unequal length")]
    Ragged,
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("node {0} is not on this tape")]
    UnknownVar(usize),
    #[error("leaf {0} is consumed more than once; per-row squared gradients are undefined")]
    SharedLeaf(usize),
}
