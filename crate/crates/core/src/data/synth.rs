//! Two-domain half-moons.
//!
//! The utility label is the moon (two interleaved half circles in a moon
//! plane). Each record is also rendered in one of two domains: the domain
//! sets an offset in a second, domain plane, and domain 1 carries a larger
//! noise scale. A fixed rotation then mixes both planes into the four base
//! features, so domain 1 is domain 0 moved by a fixed affine shift. The
//! domain is the sensitive label and is linearly separable on the raw
//! features.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{ColumnKind, ColumnMeta, DataError, Dataset};
use crate::numerics::Tensor;
use crate::rng::{self, component};

/// Number of base features: moon plane plus domain plane.
pub const BASE_FEATURES: usize = 4;
/// Domain-plane position of each domain.
pub const DOMAIN_OFFSET: [(f64, f64); 2] = [(0.0, 0.0), (1.0, 0.6)];
/// Per-domain isotropic noise standard deviation.
pub const DOMAIN_NOISE: [f64; 2] = [0.08, 0.12];
/// Noise on the derived tabular columns.
const DERIVED_NOISE: f64 = 0.25;
/// Fixed seed for the rotation and the derived-column weights; the geometry
/// does not depend on the dataset seed.
const MIXING_SEED: u64 = 0x5EE_D0F7_AB1E;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthConfig {
    pub n_per_class: usize,
    /// `BASE_FEATURES` gives the rotated base space; more appends derived
    /// noisy columns.
    pub n_features: usize,
    pub seed: u64,
}

pub fn synth_two_domain(n_per_class: usize, seed: u64) -> Result<Dataset, DataError> {
    synth_two_domain_with(SynthConfig {
        n_per_class,
        n_features: BASE_FEATURES,
        seed,
    })
}

/// Fixed orthogonal matrix (Gram–Schmidt on seeded Gaussian columns).
fn rotation(r: &mut rng::Rng) -> [[f64; BASE_FEATURES]; BASE_FEATURES] {
    let normal = Normal::new(0.0, 1.0).expect("valid");
    let mut q = [[0.0; BASE_FEATURES]; BASE_FEATURES];
    for j in 0..BASE_FEATURES {
        let mut v: [f64; BASE_FEATURES] = std::array::from_fn(|_| normal.sample(r));
        for prev in q.iter().take(j) {
            let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
            for (vi, pi) in v.iter_mut().zip(prev) {
                *vi -= dot * pi;
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        q[j] = v.map(|a| a / norm);
    }
    q
}

/// Rows alternate domain within each class, so both classes and both
/// domains are exactly balanced (up to one row for odd `n_per_class`).
/// Columns beyond the base four are fixed random linear mixtures of the
/// unrotated base coordinates plus independent noise.
pub fn synth_two_domain_with(cfg: SynthConfig) -> Result<Dataset, DataError> {
    if cfg.n_per_class < 10 {
        return Err(DataError::Invalid(format!(
            "n_per_class must be >= 10, got {}",
            cfg.n_per_class
        )));
    }
    if cfg.n_features < BASE_FEATURES {
        return Err(DataError::Invalid(format!(
            "n_features must be >= {BASE_FEATURES}, got {}",
            cfg.n_features
        )));
    }
    let mut r = rng::derived(cfg.seed, component::SYNTH);
    let std_normal = Normal::new(0.0, 1.0).expect("valid");

    let mut mix_rng = rng::seeded(MIXING_SEED);
    let rot = rotation(&mut mix_rng);
    let mixing: Vec<[f64; BASE_FEATURES]> = (BASE_FEATURES..cfg.n_features)
        .map(|_| std::array::from_fn(|_| mix_rng.random_range(-1.0..1.0)))
        .collect();

    let n = 2 * cfg.n_per_class;
    let d = cfg.n_features;
    let mut data = Vec::with_capacity(n * d);
    let mut y_util = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for class in 0..2 {
        for i in 0..cfg.n_per_class {
            let domain = i % 2;
            let t = r.random_range(0.0..PI);
            let (px, py) = if class == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            let (ox, oy) = DOMAIN_OFFSET[domain];
            let sigma = DOMAIN_NOISE[domain];
            let mut base = [px, py, ox, oy];
            for v in &mut base {
                *v += sigma * std_normal.sample(&mut r);
            }
            for row in &rot {
                data.push(row.iter().zip(&base).map(|(a, b)| a * b).sum());
            }
            for w in &mixing {
                let mix: f64 = w.iter().zip(&base).map(|(a, b)| a * b).sum();
                data.push(mix + DERIVED_NOISE * std_normal.sample(&mut r));
            }
            y_util.push(class);
            s.push(domain);
        }
    }
    let x = Tensor::new(&[n, d], data).map_err(|e| DataError::Invalid(e.to_string()))?;
    let columns = (0..d)
        .map(|j| {
            let col: Vec<f64> = (0..n).map(|i| x.get(i, j)).collect();
            ColumnMeta {
                name: format!("f{j}"),
                kind: ColumnKind::Numeric {
                    min: col.iter().cloned().fold(f64::INFINITY, f64::min),
                    max: col.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                },
            }
        })
        .collect();
    Ok(Dataset {
        x,
        y_util,
        s: Some(s),
        columns,
        utility_name: "moon".into(),
        sensitive_name: "domain".into(),
        utility_levels: vec!["0".into(), "1".into()],
        sensitive_levels: vec!["0".into(), "1".into()],
        image_shape: None,
    })
}
