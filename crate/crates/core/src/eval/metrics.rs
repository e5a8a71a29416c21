use super::EvalError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub f1: f64,
    pub auc_roc: f64,
    pub avg_precision: f64,
}

fn check_binary(y_true: &[usize], scores: &[f64]) -> Result<(usize, usize), EvalError> {
    if y_true.is_empty() {
        return Err(EvalError::Empty("no rows to score".into()));
    }
    if y_true.len() != scores.len() {
        return Err(EvalError::Shape(format!(
            "{} labels but {} scores",
            y_true.len(),
            scores.len()
        )));
    }
    if let Some((i, &y)) = y_true.iter().enumerate().find(|(_, &y)| y > 1) {
        return Err(EvalError::Config(format!("label {y} at row {i} is not binary")));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFinite(format!("score at row {i}")));
    }
    let pos = y_true.iter().filter(|&&y| y == 1).count();
    Ok((pos, y_true.len() - pos))
}

/// Accuracy and F1 at `threshold` (score `>=` threshold predicts 1), plus the
/// threshold-free AUC-ROC and average precision.
pub fn classification_metrics(
    y_true: &[usize],
    scores: &[f64],
    threshold: f64,
) -> Result<ClassificationMetrics, EvalError> {
    check_binary(y_true, scores)?;
    let (mut tp, mut fp, mut fneg, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&y, &s) in y_true.iter().zip(scores) {
        match (y == 1, s >= threshold) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fneg += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(ClassificationMetrics {
        accuracy: (tp + tn) as f64 / y_true.len() as f64,
        f1: f1_from_counts(tp, fp, fneg),
        auc_roc: auc_roc(y_true, scores)?,
        avg_precision: average_precision(y_true, scores)?,
    })
}

/// `2·TP / (2·TP + FP + FN)`, zero when there is nothing to count.
pub fn f1_from_counts(tp: usize, fp: usize, fneg: usize) -> f64 {
    let denom = 2 * tp + fp + fneg;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Indices sorted by score, descending; ties keep their input order.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Mann–Whitney rank statistic; tied scores share their average rank, which
/// counts every tied positive/negative pair as one half.
pub fn auc_roc(y_true: &[usize], scores: &[f64]) -> Result<f64, EvalError> {
    let (pos, neg) = check_binary(y_true, scores)?;
    if pos == 0 || neg == 0 {
        return Err(EvalError::Undefined("AUC needs both classes present".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // ranks are 1-based: positions i..=j share the mean rank
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &k in &idx[i..=j] {
            if y_true[k] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Step-interpolated area under the precision-recall curve:
/// `Σ (R_k − R_{k−1}) · P_k` over distinct score thresholds, descending.
pub fn average_precision(y_true: &[usize], scores: &[f64]) -> Result<f64, EvalError> {
    let (pos, neg) = check_binary(y_true, scores)?;
    if pos == 0 || neg == 0 {
        return Err(EvalError::Undefined(
            "average precision needs both classes present".into(),
        ));
    }
    let idx = descending(scores);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let threshold = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == threshold {
            if y_true[idx[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}
