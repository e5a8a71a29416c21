//! Privacy, utility, fidelity, fairness and latency measurements.

mod attack;
mod classifier;
mod fairness;
mod image;
mod latency;
mod metrics;
mod pipeline;

pub use attack::{majority_rate, privacy_protection, stratified_split, train_attacker, AttackResult};
pub use classifier::{ClassifierConfig, MlpClassifier};
pub use fairness::{fairness_metrics, FairnessMetrics};
pub use image::{mse, psnr, psnr_from_mse, ssim, SsimParams};
pub use latency::{
    latency_bench, linear_fit, timer_resolution, LatencyReport, LatencyRow, LinearFit, Stage, BENCH_HEADER,
    MIN_REPETITIONS, WARMUP_RUNS,
};
pub use metrics::{auc_roc, average_precision, classification_metrics, f1_from_counts, ClassificationMetrics};
pub use pipeline::{evaluate_release, EvalOptions, Release};

use thiserror::Error;

use crate::data::DataError;
use crate::model::ModelError;
use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation configuration: {0}")]
    Config(String),
    #[error("degenerate labels: {0}")]
    Degenerate(String),
    #[error("undefined metric: {0}")]
    Undefined(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl From<NumericsError> for EvalError {
    fn from(e: NumericsError) -> Self {
        EvalError::Model(e.into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fidelity {
    pub mse: f64,
    /// `+∞` when the reconstruction is exact.
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Everything measured for one obfuscation method on one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub privacy_protection: f64,
    pub attacker_accuracy_raw: f64,
    pub attacker_accuracy_obf: f64,
    pub chance: f64,
    pub utility: ClassificationMetrics,
    pub fidelity: Option<Fidelity>,
    pub fairness: Option<FairnessMetrics>,
    pub latency: Vec<LatencyRow>,
}

impl MetricsReport {
    /// Checks the range invariants of every field.
    pub fn validate(&self) -> Result<(), EvalError> {
        let frac = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(EvalError::Undefined(format!("{name} = {v} is outside [0, 1]")))
            }
        };
        frac("privacy_protection", self.privacy_protection)?;
        frac("attacker_accuracy_raw", self.attacker_accuracy_raw)?;
        frac("attacker_accuracy_obf", self.attacker_accuracy_obf)?;
        frac("chance", self.chance)?;
        frac("accuracy", self.utility.accuracy)?;
        frac("f1", self.utility.f1)?;
        frac("auc_roc", self.utility.auc_roc)?;
        frac("avg_precision", self.utility.avg_precision)?;
        if let Some(f) = &self.fidelity {
            if f.psnr_db.is_nan() || f.psnr_db < 0.0 {
                return Err(EvalError::Undefined(format!("psnr_db = {} is negative", f.psnr_db)));
            }
            if !(-1.0..=1.0).contains(&f.ssim) {
                return Err(EvalError::Undefined(format!("ssim = {} is outside [-1, 1]", f.ssim)));
            }
        }
        if let Some(f) = &self.fairness {
            frac("dp_diff", f.dp_diff)?;
            if let Some(eo) = f.eo_diff {
                frac("eo_diff", eo)?;
            }
        }
        Ok(())
    }
}
