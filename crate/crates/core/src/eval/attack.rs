//! Attribute-inference attack: a fresh classifier trained to predict the
//! sensitive label from released features. Its held-out accuracy measures
//! leakage.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::classifier::{ClassifierConfig, MlpClassifier};
use super::EvalError;
use crate::numerics::Tensor;
use crate::rng;

#[derive(Clone, Debug)]
pub struct AttackResult {
    pub attacker: MlpClassifier,
    /// Accuracy on the held-out 20%.
    pub accuracy: f64,
    /// Majority-class rate of `s` over all rows.
    pub chance: f64,
}

/// Per-class split: `round(train_fraction · size)` rows of each class go to
/// train (at least one on each side for classes of two or more).
pub fn stratified_split(labels: &[usize], train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut r = rng::seeded(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for rows in by_class.values() {
        let mut rows = rows.clone();
        rows.shuffle(&mut r);
        let k = (train_fraction * rows.len() as f64).round() as usize;
        let k = if rows.len() >= 2 {
            k.clamp(1, rows.len() - 1)
        } else {
            rows.len()
        };
        train.extend_from_slice(&rows[..k]);
        test.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

pub fn majority_rate(labels: &[usize]) -> f64 {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    counts.values().max().map_or(0.0, |&c| c as f64 / labels.len() as f64)
}

/// Trains the attacker on a stratified 80/20 split of `(latents, s)`.
/// `latents` are plain tensors, so no gradient can reach the model that
/// produced them.
pub fn train_attacker(
    latents: &Tensor,
    s: &[usize],
    config: &ClassifierConfig,
    seed: u64,
) -> Result<AttackResult, EvalError> {
    if latents.rows() != s.len() {
        return Err(EvalError::Shape(format!(
            "{} latent rows but {} labels",
            latents.rows(),
            s.len()
        )));
    }
    let n_classes = s.iter().max().map_or(0, |m| m + 1);
    let distinct = {
        let mut v = s.to_vec();
        v.sort_unstable();
        v.dedup();
        v.len()
    };
    if distinct < 2 {
        return Err(EvalError::Degenerate(
            "sensitive labels take a single value; nothing to infer".into(),
        ));
    }
    let (train, test) = stratified_split(s, 0.8, rng::derive_seed(seed, rng::component::SPLIT));
    let y_train: Vec<usize> = train.iter().map(|&i| s[i]).collect();
    let y_test: Vec<usize> = test.iter().map(|&i| s[i]).collect();
    let attacker = MlpClassifier::fit(&latents.select_rows(&train), &y_train, n_classes, config, seed)?;
    let accuracy = attacker.accuracy(&latents.select_rows(&test), &y_test)?;
    Ok(AttackResult {
        attacker,
        accuracy,
        chance: majority_rate(s),
    })
}

/// Normalized reduction of attacker advantage:
/// `clamp((acc_raw − acc_obf) / (acc_raw − chance), 0, 1)`.
pub fn privacy_protection(acc_raw: f64, acc_obf: f64, chance: f64) -> Result<f64, EvalError> {
    for (name, v) in [("acc_raw", acc_raw), ("acc_obf", acc_obf), ("chance", chance)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(EvalError::Config(format!("{name} = {v} is not a fraction")));
        }
    }
    if acc_raw <= chance {
        return Err(EvalError::Undefined(format!(
            "raw attacker accuracy {acc_raw} does not exceed chance {chance}; protection is undefined"
        )));
    }
    Ok(((acc_raw - acc_obf) / (acc_raw - chance)).clamp(0.0, 1.0))
}
