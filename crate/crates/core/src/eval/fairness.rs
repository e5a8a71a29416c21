use super::EvalError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FairnessMetrics {
    /// `|P(ŷ=1 | g=0) − P(ŷ=1 | g=1)|`
    pub dp_diff: f64,
    /// `|P(ŷ=1 | y=1, g=0) − P(ŷ=1 | y=1, g=1)|`; `None` when a group has no
    /// positives.
    pub eo_diff: Option<f64>,
}

fn rate(hits: usize, total: usize) -> f64 {
    hits as f64 / total as f64
}

/// Demographic-parity and equal-opportunity gaps between two groups. All
/// three inputs are 0/1 valued.
pub fn fairness_metrics(y_hat: &[usize], y_true: &[usize], group: &[usize]) -> Result<FairnessMetrics, EvalError> {
    if y_hat.len() != y_true.len() || y_hat.len() != group.len() {
        return Err(EvalError::Shape(format!(
            "lengths differ: predictions {}, labels {}, groups {}",
            y_hat.len(),
            y_true.len(),
            group.len()
        )));
    }
    for (name, v) in [("prediction", y_hat), ("label", y_true), ("group", group)] {
        if let Some(i) = v.iter().position(|&x| x > 1) {
            return Err(EvalError::Config(format!("{name} at row {i} is not binary")));
        }
    }
    let mut n = [0usize; 2];
    let mut pred_pos = [0usize; 2];
    let mut true_pos = [0usize; 2];
    let mut hit_among_true = [0usize; 2];
    for ((&p, &y), &g) in y_hat.iter().zip(y_true).zip(group) {
        n[g] += 1;
        pred_pos[g] += p;
        if y == 1 {
            true_pos[g] += 1;
            hit_among_true[g] += p;
        }
    }
    if let Some(g) = (0..2).find(|&g| n[g] == 0) {
        return Err(EvalError::Empty(format!("group {g} has no rows")));
    }
    let dp_diff = (rate(pred_pos[0], n[0]) - rate(pred_pos[1], n[1])).abs();
    let eo_diff = (true_pos[0] > 0 && true_pos[1] > 0)
        .then(|| (rate(hit_among_true[0], true_pos[0]) - rate(hit_among_true[1], true_pos[1])).abs());
    Ok(FairnessMetrics { dp_diff, eo_diff })
}
