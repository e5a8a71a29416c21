//! Differential-privacy input perturbation: clip each cell to
//! `[-clip_bound, clip_bound]`, then add independent Laplace or Gaussian
//! noise calibrated to `clip_bound`.

use rand_distr::{Distribution, Exp1, StandardNormal};

use super::BaselineError;
use crate::numerics::Tensor;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mechanism {
    Laplace,
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DpParams {
    pub epsilon: f64,
    pub delta: f64,
    pub clip_bound: f64,
    pub mechanism: Mechanism,
}

impl DpParams {
    pub fn laplace(epsilon: f64, clip_bound: f64) -> Self {
        Self {
            epsilon,
            delta: 0.0,
            clip_bound,
            mechanism: Mechanism::Laplace,
        }
    }

    pub fn gaussian(epsilon: f64, delta: f64, clip_bound: f64) -> Self {
        Self {
            epsilon,
            delta,
            clip_bound,
            mechanism: Mechanism::Gaussian,
        }
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(BaselineError::Config(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !self.clip_bound.is_finite() || self.clip_bound <= 0.0 {
            return Err(BaselineError::Config(format!(
                "clip_bound must be > 0, got {}",
                self.clip_bound
            )));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(BaselineError::Config(format!(
                "delta must lie in [0, 1), got {}",
                self.delta
            )));
        }
        if self.mechanism == Mechanism::Gaussian && self.delta == 0.0 {
            return Err(BaselineError::Config("the Gaussian mechanism needs delta > 0".into()));
        }
        Ok(())
    }

    /// `b = clip_bound / epsilon`
    pub fn laplace_scale(&self) -> f64 {
        self.clip_bound / self.epsilon
    }

    /// `σ = clip_bound · sqrt(2 ln(1.25 / delta)) / epsilon`
    pub fn gaussian_sigma(&self) -> f64 {
        self.clip_bound * (2.0 * (1.25 / self.delta).ln()).sqrt() / self.epsilon
    }
}

/// Draws `n` noise values for `params`, deterministic in `seed`.
pub fn sample_noise(params: &DpParams, n: usize, seed: u64) -> Result<Vec<f64>, BaselineError> {
    params.validate()?;
    let mut r = rng::seeded(seed);
    Ok(match params.mechanism {
        Mechanism::Laplace => {
            let b = params.laplace_scale();
            (0..n)
                .map(|_| {
                    // difference of two unit exponentials is standard Laplace
                    let e1: f64 = Exp1.sample(&mut r);
                    let e2: f64 = Exp1.sample(&mut r);
                    b * (e1 - e2)
                })
                .collect()
        }
        Mechanism::Gaussian => {
            let sigma = params.gaussian_sigma();
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut r);
                    sigma * z
                })
                .collect()
        }
    })
}

pub fn dp_perturb(x: &Tensor, params: &DpParams, seed: u64) -> Result<Tensor, BaselineError> {
    let noise = sample_noise(params, x.len(), seed)?;
    let c = params.clip_bound;
    let mut out = x.clone();
    for (v, n) in out.data_mut().iter_mut().zip(noise) {
        *v = v.clamp(-c, c) + n;
    }
    Ok(out)
}
