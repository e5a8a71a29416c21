//! Latent space projection (LSP): an adversarially trained encoder/decoder
//! that releases a latent slice from which a sensitive attribute is hard to
//! recover, together with the privacy/utility evaluation harness and two
//! classical baselines (k-anonymity and differential-privacy input noise).

pub mod baselines;
pub mod data;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod training;
