use rand::Rng as _;

use crate::numerics::{Gradients, NumericsError, Parameter, Tape, Tensor, Var};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        let slope = match self {
            Activation::Relu => 0.0,
            Activation::LeakyRelu(s) => s,
        };
        if v > 0.0 {
            v
        } else {
            slope * v
        }
    }

    fn record(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::LeakyRelu(s) => tape.leaky_relu(x, s),
        }
    }
}

/// Fully connected layer `y = x·W + b` with `W: in×out`, `b: 1×out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Linear {
    /// Glorot-uniform weights, zero bias. Weights are drawn as `f32` so the
    /// layer survives 32-bit serialization unchanged.
    pub fn glorot(name: &str, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let limit = glorot_limit(fan_in, fan_out);
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..limit) as f32 as f64)
            .collect();
        Self {
            weight: Parameter::new(
                format!("{name}.weight"),
                Tensor::new(&[fan_in, fan_out], data).expect("positive dims"),
            ),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(&[1, fan_out])),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.shape()[1]
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor, NumericsError> {
        let mut y = x.matmul(&self.weight.value)?;
        let n = self.out_dim();
        let b = self.bias.value.data();
        for row in y.data_mut().chunks_mut(n) {
            for (v, bv) in row.iter_mut().zip(b) {
                *v += bv;
            }
        }
        Ok(y)
    }
}

/// `sqrt(6 / (fan_in + fan_out))`
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Tape handles for one network's parameters.
#[derive(Clone, Debug)]
pub struct MlpVars {
    layers: Vec<(Var, Var)>,
}

impl MlpVars {
    /// Weight and bias handles in `Mlp::params` order.
    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }
}

/// Multi-layer perceptron. Hidden layers use `activation` (and dropout when
/// training); the output layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
    pub dropout: f64,
}

impl Mlp {
    /// `widths` lists every layer width including input and output.
    pub fn new(name: &str, widths: &[usize], activation: Activation, dropout: f64, rng: &mut Rng) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::glorot(&format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self {
            layers,
            activation,
            dropout,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    /// Widths of the hidden layers only.
    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(Linear::out_dim)
            .collect()
    }

    /// Deterministic forward pass without a tape (dropout inactive).
    pub fn infer(&self, x: &Tensor) -> Result<Tensor, NumericsError> {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.infer(&h)?;
            if i < last {
                let act = self.activation;
                h.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            }
        }
        Ok(h)
    }

    pub fn bind(&self, tape: &mut Tape) -> MlpVars {
        MlpVars {
            layers: self
                .layers
                .iter()
                .map(|l| (tape.param(l.weight.value.clone()), tape.param(l.bias.value.clone())))
                .collect(),
        }
    }

    /// Records the forward pass on `tape`. Dropout is applied to hidden
    /// activations only when `dropout_rng` is given.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &MlpVars,
        x: Var,
        mut dropout_rng: Option<&mut Rng>,
    ) -> Result<Var, NumericsError> {
        let mut h = x;
        let last = vars.layers.len() - 1;
        for (i, &(w, b)) in vars.layers.iter().enumerate() {
            let p = tape.matmul(h, w)?;
            h = tape.add_row(p, b)?;
            if i < last {
                h = self.activation.record(tape, h);
                if let Some(rng) = dropout_rng.as_deref_mut() {
                    if self.dropout > 0.0 {
                        let mask = dropout_mask(tape.value(h).shape(), self.dropout, rng);
                        h = tape.mask_mul(h, mask)?;
                    }
                }
            }
        }
        Ok(h)
    }

    /// Adds tape gradients into each parameter's accumulator.
    pub fn accumulate(&mut self, vars: &MlpVars, grads: &Gradients) -> Result<(), NumericsError> {
        for (layer, &(w, b)) in self.layers.iter_mut().zip(&vars.layers) {
            if let Some(g) = grads.get(w) {
                layer.weight.accumulate(g)?;
            }
            if let Some(g) = grads.get(b) {
                layer.bias.accumulate(g)?;
            }
        }
        Ok(())
    }

    pub fn params(&self) -> impl Iterator<Item = &Parameter> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }
}

/// Inverted dropout mask: kept units are scaled by `1 / (1 - rate)`.
pub fn dropout_mask(shape: &[usize], rate: f64, rng: &mut Rng) -> Tensor {
    let keep = 1.0 / (1.0 - rate);
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    Tensor::new(shape, data).expect("shape from an existing tensor")
}
