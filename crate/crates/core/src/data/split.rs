use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{DataError, Dataset};
use crate::numerics::Tensor;
use crate::rng::{self, component};

/// Per-column min-max statistics fitted on a training split.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    pub fn fit(x: &Tensor) -> Self {
        let d = x.cols();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for row in x.data().chunks(d) {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Self { min, max }
    }

    /// `(x − min) / (max − min)`; constant columns map to `x − min`.
    pub fn apply(&self, x: &Tensor) -> Tensor {
        let d = x.cols();
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(d) {
            for (j, v) in row.iter_mut().enumerate() {
                let range = self.max[j] - self.min[j];
                *v = if range > 0.0 {
                    (*v - self.min[j]) / range
                } else {
                    *v - self.min[j]
                };
            }
        }
        out
    }
}

/// Stratified split on `(y_util, s)` followed by min-max normalization
/// fitted on the training rows. Test values may fall outside `[0, 1]`.
/// Each stratum contributes `round(train_fraction · size)` rows to train,
/// clamped so both sides get at least one.
pub fn split_normalize(
    dataset: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset, NormStats), DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::Invalid(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    dataset.validate()?;
    let s = dataset.sensitive()?;

    let mut strata: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, (&y, &si)) in dataset.y_util.iter().zip(s).enumerate() {
        strata.entry((y, si)).or_default().push(i);
    }
    if let Some((key, rows)) = strata.iter().find(|(_, rows)| rows.len() < 2) {
        return Err(DataError::Stratum(format!(
            "stratum (utility={}, sensitive={}) has {} row(s); at least 2 are needed",
            key.0,
            key.1,
            rows.len()
        )));
    }

    let mut r = rng::derived(seed, component::SPLIT);
    let (mut train_rows, mut test_rows) = (Vec::new(), Vec::new());
    for rows in strata.values() {
        let mut rows = rows.clone();
        rows.shuffle(&mut r);
        let k = ((train_fraction * rows.len() as f64).round() as usize).clamp(1, rows.len() - 1);
        train_rows.extend_from_slice(&rows[..k]);
        test_rows.extend_from_slice(&rows[k..]);
    }
    train_rows.sort_unstable();
    test_rows.sort_unstable();

    let mut train = dataset.select(&train_rows);
    let mut test = dataset.select(&test_rows);
    let stats = NormStats::fit(&train.x);
    train.x = stats.apply(&train.x);
    test.x = stats.apply(&test.x);
    Ok((train, test, stats))
}
