//! Dense tensors, reverse-mode autodiff and the Adam optimizer.

mod adam;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState, Parameter};
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use tape::{sigmoid, softmax_rows, Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("label {label} at row {row} is outside 0..{classes}")]
    Label { row: usize, label: usize, classes: usize },
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
}
