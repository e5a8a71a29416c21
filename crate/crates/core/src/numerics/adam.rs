use super::tensor::Tensor;
use super::NumericsError;

/// A trainable tensor with its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Option<Tensor>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Self {
            name: name.into(),
            value,
            grad: None,
        }
    }

    /// Adds `delta` into the gradient accumulator, creating it if absent.
    pub fn accumulate(&mut self, delta: &Tensor) -> Result<(), NumericsError> {
        if delta.shape() != self.value.shape() {
            return Err(NumericsError::Dimension {
                op: "accumulate",
                lhs: self.value.shape().to_vec(),
                rhs: delta.shape().to_vec(),
            });
        }
        match &mut self.grad {
            Some(g) => {
                for (a, b) in g.data_mut().iter_mut().zip(delta.data()) {
                    *a += b;
                }
            }
            None => self.grad = Some(delta.clone()),
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        match &mut self.grad {
            Some(g) => g.data_mut().iter_mut().for_each(|v| *v = 0.0),
            None => self.grad = Some(Tensor::zeros(self.value.shape())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam optimizer state. Moment buffers are allocated on the first step and
/// matched to parameters by position.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update over `params`. Every parameter must
    /// carry a gradient; gradients are zeroed afterwards.
    pub fn step(&mut self, params: &mut [&mut Parameter]) -> Result<(), NumericsError> {
        let scales = vec![1.0; params.len()];
        self.step_scaled(params, &scales)
    }

    /// As [`AdamState::step`], with the learning rate of `params[i]`
    /// multiplied by `lr_scales[i]`.
    pub fn step_scaled(&mut self, params: &mut [&mut Parameter], lr_scales: &[f64]) -> Result<(), NumericsError> {
        if lr_scales.len() != params.len() {
            return Err(NumericsError::Contract(format!(
                "{} learning-rate scales for {} parameters",
                lr_scales.len(),
                params.len()
            )));
        }
        if let Some(p) = params.iter().find(|p| p.grad.is_none()) {
            return Err(NumericsError::Contract(format!(
                "parameter `{}` has no gradient",
                p.name
            )));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len()
            || self
                .m
                .iter()
                .zip(params.iter())
                .any(|(m, p)| m.shape() != p.value.shape())
        {
            return Err(NumericsError::Contract(
                "parameter set changed between optimizer steps".into(),
            ));
        }

        self.t += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);

        for (((p, m), v), &scale) in params.iter_mut().zip(&mut self.m).zip(&mut self.v).zip(lr_scales) {
            let lr = lr * scale;
            let g = p.grad.as_mut().expect("checked above");
            for (((w, gi), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(g.data_mut())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * *gi;
                *vi = b2 * *vi + (1.0 - b2) * *gi * *gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
                *gi = 0.0;
            }
        }
        Ok(())
    }
}
