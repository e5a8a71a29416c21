use crate::model::{Activation, Mlp};
use crate::numerics::{softmax_rows, AdamConfig, AdamState, Parameter, Tape, Tensor};
use crate::rng;
use crate::training::{argmax, epoch_order};

use super::EvalError;

/// Fixed small classifier used both as the attacker and as the downstream
/// utility model: two hidden ReLU layers of 32, Adam at 1e-3, 100 epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpClassifier {
    pub net: Mlp,
    pub n_classes: usize,
}

impl MlpClassifier {
    /// Untrained classifier with seeded Glorot weights.
    pub fn init(input_dim: usize, n_classes: usize, config: &ClassifierConfig, seed: u64) -> Self {
        let mut widths = vec![input_dim];
        widths.extend_from_slice(&config.hidden);
        widths.push(n_classes);
        let mut r = rng::derived(seed, rng::component::MODEL_INIT);
        Self {
            net: Mlp::new("classifier", &widths, Activation::Relu, 0.0, &mut r),
            n_classes,
        }
    }

    pub fn fit(
        x: &Tensor,
        y: &[usize],
        n_classes: usize,
        config: &ClassifierConfig,
        seed: u64,
    ) -> Result<Self, EvalError> {
        if x.rows() != y.len() {
            return Err(EvalError::Shape(format!("{} rows but {} labels", x.rows(), y.len())));
        }
        if n_classes < 2 {
            return Err(EvalError::Degenerate(format!("{n_classes} class(es)")));
        }
        if config.epochs == 0 || config.batch_size == 0 {
            return Err(EvalError::Config(
                "classifier epochs and batch size must be positive".into(),
            ));
        }
        let mut clf = Self::init(x.cols(), n_classes, config, seed);
        clf.net.params_mut().for_each(Parameter::zero_grad);
        let mut opt = AdamState::new(AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        });
        let mut tape = Tape::new();
        for epoch in 0..config.epochs {
            let order = epoch_order(x.rows(), seed, epoch);
            for rows in order.chunks(config.batch_size) {
                let xb = x.select_rows(rows);
                let yb: Vec<usize> = rows.iter().map(|&r| y[r]).collect();
                tape.reset();
                let vars = clf.net.bind(&mut tape);
                let xv = tape.constant(xb);
                let logits = clf.net.forward(&mut tape, &vars, xv, None)?;
                let loss = tape.softmax_cross_entropy(logits, &yb)?;
                if !tape.value(loss).data()[0].is_finite() {
                    return Err(EvalError::NonFinite(format!("classifier loss at epoch {epoch}")));
                }
                let grads = tape.backward(loss)?;
                clf.net.accumulate(&vars, &grads)?;
                let mut params: Vec<&mut Parameter> = clf.net.params_mut().collect();
                opt.step(&mut params)?;
            }
        }
        Ok(clf)
    }

    pub fn predict_proba(&self, x: &Tensor) -> Result<Tensor, EvalError> {
        Ok(softmax_rows(&self.net.infer(x)?)?)
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>, EvalError> {
        let p = self.predict_proba(x)?;
        Ok((0..p.rows()).map(|i| argmax(p.row(i))).collect())
    }

    pub fn accuracy(&self, x: &Tensor, y: &[usize]) -> Result<f64, EvalError> {
        let pred = self.predict(x)?;
        Ok(pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64)
    }
}
