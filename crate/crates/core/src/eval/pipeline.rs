//! Release evaluation: the fixed downstream classifier is trained on the
//! released training rows and scored on the released test rows; the fixed
//! attacker is trained once on raw features and once on released features.

use super::attack::{privacy_protection, train_attacker};
use super::classifier::{ClassifierConfig, MlpClassifier};
use super::fairness::fairness_metrics;
use super::image::{mse, psnr_from_mse, ssim, SsimParams};
use super::metrics::{auc_roc, average_precision, classification_metrics, f1_from_counts, ClassificationMetrics};
use super::{EvalError, Fidelity, MetricsReport};
use crate::data::Dataset;
use crate::numerics::Tensor;
use crate::rng::{component, derive_seed};

/// Released representation of a normalized train/test split.
#[derive(Clone, Debug)]
pub struct Release {
    pub train_x: Tensor,
    /// Rows of the raw training split that survive (all rows unless the
    /// method suppresses records).
    pub train_rows: Vec<usize>,
    pub test_x: Tensor,
    pub test_rows: Vec<usize>,
    /// Reconstruction of the surviving test rows in input space, for
    /// fidelity metrics.
    pub test_reconstruction: Option<Tensor>,
}

impl Release {
    /// The identity release.
    pub fn raw(train: &Dataset, test: &Dataset) -> Self {
        Self {
            train_x: train.x.clone(),
            train_rows: (0..train.len()).collect(),
            test_x: test.x.clone(),
            test_rows: (0..test.len()).collect(),
            test_reconstruction: Some(test.x.clone()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalOptions {
    pub classifier: ClassifierConfig,
    pub fidelity: bool,
    pub fairness: bool,
    pub seed: u64,
}

fn stack(a: &Tensor, b: &Tensor) -> Result<Tensor, EvalError> {
    if a.cols() != b.cols() {
        return Err(EvalError::Shape(format!(
            "cannot stack {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut data = a.data().to_vec();
    data.extend_from_slice(b.data());
    Tensor::new(&[a.rows() + b.rows(), a.cols()], data).map_err(|e| EvalError::Shape(e.to_string()))
}

/// Binary tasks get thresholded metrics at 0.5 on the class-1 probability.
/// Multi-class tasks report accuracy with macro-averaged one-vs-rest F1,
/// AUC and average precision.
fn utility_metrics(probs: &Tensor, pred: &[usize], y: &[usize]) -> Result<ClassificationMetrics, EvalError> {
    let k = probs.cols();
    if k == 2 {
        let scores: Vec<f64> = (0..probs.rows()).map(|i| probs.get(i, 1)).collect();
        return classification_metrics(y, &scores, 0.5);
    }
    let accuracy = pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64;
    let (mut f1, mut auc, mut ap, mut counted) = (0.0, 0.0, 0.0, 0usize);
    for c in 0..k {
        let yc: Vec<usize> = y.iter().map(|&v| usize::from(v == c)).collect();
        let pos = yc.iter().sum::<usize>();
        if pos == 0 || pos == yc.len() {
            continue;
        }
        let sc: Vec<f64> = (0..probs.rows()).map(|i| probs.get(i, c)).collect();
        let (mut tp, mut fp, mut fneg) = (0, 0, 0);
        for (&p, &t) in pred.iter().zip(y) {
            match (p == c, t == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                _ => {}
            }
        }
        f1 += f1_from_counts(tp, fp, fneg);
        auc += auc_roc(&yc, &sc)?;
        ap += average_precision(&yc, &sc)?;
        counted += 1;
    }
    if counted == 0 {
        return Err(EvalError::Undefined("test split holds a single utility class".into()));
    }
    let c = counted as f64;
    Ok(ClassificationMetrics {
        accuracy,
        f1: f1 / c,
        auc_roc: auc / c,
        avg_precision: ap / c,
    })
}

/// Runs the downstream and attacker evaluations for one release of a
/// normalized `(train, test)` split.
pub fn evaluate_release(
    train: &Dataset,
    test: &Dataset,
    release: &Release,
    options: &EvalOptions,
) -> Result<MetricsReport, EvalError> {
    let s_train = train.sensitive()?;
    let s_test = test.sensitive()?;
    if release.train_x.rows() != release.train_rows.len() || release.test_x.rows() != release.test_rows.len() {
        return Err(EvalError::Shape("release rows do not match their index lists".into()));
    }
    if release.train_rows.is_empty() || release.test_rows.is_empty() {
        return Err(EvalError::Empty("release suppressed every row of a split".into()));
    }
    let n_util = train.n_utility_classes().max(test.n_utility_classes());

    let y_train: Vec<usize> = release.train_rows.iter().map(|&i| train.y_util[i]).collect();
    let y_test: Vec<usize> = release.test_rows.iter().map(|&i| test.y_util[i]).collect();
    let downstream = MlpClassifier::fit(
        &release.train_x,
        &y_train,
        n_util,
        &options.classifier,
        derive_seed(options.seed, component::DOWNSTREAM),
    )?;
    let probs = downstream.predict_proba(&release.test_x)?;
    let pred = downstream.predict(&release.test_x)?;
    let utility = utility_metrics(&probs, &pred, &y_test)?;

    let attacker_seed = derive_seed(options.seed, component::ATTACKER);
    let raw_all = stack(&train.x, &test.x)?;
    let s_all: Vec<usize> = s_train.iter().chain(s_test).copied().collect();
    let raw_attack = train_attacker(&raw_all, &s_all, &options.classifier, attacker_seed)?;

    let released_all = stack(&release.train_x, &release.test_x)?;
    let s_released: Vec<usize> = release
        .train_rows
        .iter()
        .map(|&i| s_train[i])
        .chain(release.test_rows.iter().map(|&i| s_test[i]))
        .collect();
    let obf_attack = train_attacker(&released_all, &s_released, &options.classifier, attacker_seed)?;
    let chance = raw_attack.chance;
    let protection = privacy_protection(raw_attack.accuracy, obf_attack.accuracy, chance)?;

    let fairness = if options.fairness {
        let group: Vec<usize> = release.test_rows.iter().map(|&i| s_test[i]).collect();
        let binary = |v: &[usize]| v.iter().all(|&x| x <= 1);
        if binary(&pred) && binary(&y_test) && binary(&group) {
            Some(fairness_metrics(&pred, &y_test, &group)?)
        } else {
            None
        }
    } else {
        None
    };

    let fidelity = match (options.fidelity, &release.test_reconstruction, test.image_shape) {
        (true, Some(recon), Some((h, w))) => {
            let original = test.x.select_rows(&release.test_rows);
            let e = mse(original.data(), recon.data())?;
            let params = SsimParams::default();
            let mut total = 0.0;
            for i in 0..original.rows() {
                total += ssim(original.row(i), recon.row(i), h, w, &params)?;
            }
            Some(Fidelity {
                mse: e,
                psnr_db: psnr_from_mse(e, params.data_range),
                ssim: total / original.rows() as f64,
            })
        }
        _ => None,
    };

    Ok(MetricsReport {
        privacy_protection: protection,
        attacker_accuracy_raw: raw_attack.accuracy,
        attacker_accuracy_obf: obf_attack.accuracy,
        chance,
        utility,
        fidelity,
        fairness,
        latency: Vec::new(),
    })
}
