//! Wall-clock latency of the encode → process → decode pipeline.
//!
//! Measurements are taken on the calling thread only. Run with no concurrent
//! load; the report header states this.

use std::fmt;
use std::time::{Duration, Instant};

use rand::Rng as _;

use super::classifier::MlpClassifier;
use super::EvalError;
use crate::model::LspModel;
use crate::numerics::Tensor;
use crate::rng;

type StageFn<'a> = Box<dyn Fn() -> Result<(), EvalError> + 'a>;

pub const WARMUP_RUNS: usize = 2;
pub const MIN_REPETITIONS: usize = 5;
pub const BENCH_HEADER: &str = "single-threaded measurement; run on an otherwise idle machine";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Encode,
    Process,
    Decode,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Encode => "encode",
            Stage::Process => "process",
            Stage::Decode => "decode",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatencyRow {
    pub stage: Stage,
    pub batch_size: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    /// Per-repetition timings after warm-up.
    pub samples_ms: Vec<f64>,
}

impl LatencyRow {
    pub fn n(&self) -> usize {
        self.samples_ms.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatencyReport {
    pub header: &'static str,
    pub rows: Vec<LatencyRow>,
    pub timer_resolution_ns: f64,
    pub warnings: Vec<String>,
}

impl LatencyReport {
    pub fn stage_rows(&self, stage: Stage) -> impl Iterator<Item = &LatencyRow> {
        self.rows.iter().filter(move |r| r.stage == stage)
    }

    /// Least-squares fit of mean time against batch size for one stage.
    pub fn linear_fit(&self, stage: Stage) -> Option<LinearFit> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self.stage_rows(stage).map(|r| (r.batch_size as f64, r.mean_ms)).unzip();
        linear_fit(&xs, &ys)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = slope·x + intercept` with its R². Needs at
/// least two distinct `x` values.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (slope * x + intercept)).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Smallest observable non-zero step of the monotonic clock.
pub fn timer_resolution() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..200 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min(b - a);
    }
    best
}

fn time_ms<T>(f: impl Fn() -> Result<T, EvalError>) -> Result<f64, EvalError> {
    let start = Instant::now();
    let out = f()?;
    let elapsed = start.elapsed();
    std::hint::black_box(out);
    Ok(elapsed.as_secs_f64() * 1e3)
}

fn summarize(stage: Stage, batch_size: usize, samples_ms: Vec<f64>) -> LatencyRow {
    let n = samples_ms.len() as f64;
    let mean_ms = samples_ms.iter().sum::<f64>() / n;
    let var = samples_ms.iter().map(|s| (s - mean_ms).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    LatencyRow {
        stage,
        batch_size,
        mean_ms,
        std_ms: var.sqrt(),
        samples_ms,
    }
}

/// Times each stage at each batch size. `downstream` enables the process
/// stage (classification of the released slice); `decode` enables the
/// no-key decode stage. Each cell runs `WARMUP_RUNS` discarded repetitions
/// followed by `repetitions` recorded ones.
pub fn latency_bench(
    model: &LspModel,
    batch_sizes: &[usize],
    repetitions: usize,
    downstream: Option<&MlpClassifier>,
    decode: bool,
    seed: u64,
) -> Result<LatencyReport, EvalError> {
    if repetitions < MIN_REPETITIONS {
        return Err(EvalError::Config(format!(
            "at least {MIN_REPETITIONS} repetitions are required, got {repetitions}"
        )));
    }
    if batch_sizes.is_empty() || batch_sizes.contains(&0) {
        return Err(EvalError::Config("batch sizes must be non-empty and positive".into()));
    }
    if batch_sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::Config(format!(
            "batch sizes must be strictly increasing, got {batch_sizes:?}"
        )));
    }
    if let Some(clf) = downstream {
        if clf.net.in_dim() != model.spec.z_ns_dim {
            return Err(EvalError::Shape(format!(
                "downstream classifier reads {} features, released slice has {}",
                clf.net.in_dim(),
                model.spec.z_ns_dim
            )));
        }
    }

    let resolution = timer_resolution();
    let mut r = rng::derived(seed, rng::component::BENCH);
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let d = model.spec.input_dim;
    for &b in batch_sizes {
        let x = Tensor::new(&[b, d], (0..b * d).map(|_| r.random::<f64>()).collect())
            .map_err(|e| EvalError::Shape(e.to_string()))?;
        let z_ns = model.encode(&x)?.z_ns;

        let mut stages: Vec<(Stage, StageFn<'_>)> = vec![(
            Stage::Encode,
            Box::new(|| model.encode(&x).map(drop).map_err(EvalError::from)),
        )];
        if let Some(clf) = downstream {
            let z = z_ns.clone();
            stages.push((Stage::Process, Box::new(move || clf.predict(&z).map(drop))));
        }
        if decode {
            let z = z_ns.clone();
            stages.push((
                Stage::Decode,
                Box::new(move || model.decode_obfuscated(&z).map(drop).map_err(EvalError::from)),
            ));
        }
        for (stage, run) in &stages {
            for _ in 0..WARMUP_RUNS {
                time_ms(run)?;
            }
            let samples = (0..repetitions).map(|_| time_ms(run)).collect::<Result<Vec<_>, _>>()?;
            let row = summarize(*stage, b, samples);
            if row.mean_ms * 1e6 < 10.0 * resolution.as_nanos() as f64 {
                warnings.push(format!(
                    "{stage} at batch {b}: mean {:.6} ms is within 10x of the timer resolution ({} ns)",
                    row.mean_ms,
                    resolution.as_nanos()
                ));
            }
            rows.push(row);
        }
    }
    rows.sort_by_key(|r| (r.stage, r.batch_size));
    Ok(LatencyReport {
        header: BENCH_HEADER,
        rows,
        timer_resolution_ns: resolution.as_nanos() as f64,
        warnings,
    })
}
