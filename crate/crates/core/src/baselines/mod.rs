//! Comparison methods: Mondrian k-anonymity and differential-privacy input
//! perturbation.

mod dp;
mod kanon;

pub use dp::{dp_perturb, sample_noise, DpParams, Mechanism};
pub use kanon::{k_anonymize, min_class_size, AnonymizedTable, Generalized, Value};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("baseline configuration: {0}")]
    Config(String),
    #[error("table shape: {0}")]
    Shape(String),
}
