//! The three-network latent space projection model.
//!
//! The encoder maps a record to a latent code `z = [z_s | z_ns]`, bounded to
//! `(-1, 1)` by a final `tanh`. `z_s` is
//! the keyed capsule that is meant to hold the sensitive attribute (a
//! cooperative head predicts `s` from it), `z_ns` is the released slice. The
//! privacy discriminator reads `z_ns` only and is coupled to the encoder
//! through a gradient-reversal layer, so a single joint backward pass trains
//! the discriminator to find `s` while pushing the encoder to hide it.

mod layers;

pub use layers::{dropout_mask, glorot_limit, Activation, Linear, Mlp, MlpVars};

use thiserror::Error;

use crate::numerics::{softmax_rows, Gradients, NumericsError, Parameter, Tape, Tensor, Var};
use crate::rng::{self, Rng};

pub const ENCODER_LEAKY_SLOPE: f64 = 0.01;
pub const DISCRIMINATOR_DROPOUT: f64 = 0.3;
pub const DISCRIMINATOR_LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Architecture of an [`LspModel`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub input_dim: usize,
    /// May be zero: a model without a keyed capsule.
    pub z_s_dim: usize,
    pub z_ns_dim: usize,
    pub n_sensitive_classes: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
}

impl ModelSpec {
    /// Default hidden widths: encoder `[64, 32]`, decoder `[32, 64]`,
    /// discriminator `[32, 16]`.
    pub fn new(input_dim: usize, z_s_dim: usize, z_ns_dim: usize, n_sensitive_classes: usize) -> Self {
        Self {
            input_dim,
            z_s_dim,
            z_ns_dim,
            n_sensitive_classes,
            encoder_hidden: vec![64, 32],
            decoder_hidden: vec![32, 64],
            disc_hidden: vec![32, 16],
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.z_s_dim + self.z_ns_dim
    }

    /// Number of scalar parameters, or `None` on overflow.
    pub fn param_count(&self) -> Option<usize> {
        fn mlp(input: usize, hidden: &[usize], output: usize) -> Option<usize> {
            let mut total = 0usize;
            let mut prev = input;
            for &w in hidden.iter().chain([&output]) {
                total = total.checked_add(prev.checked_mul(w)?.checked_add(w)?)?;
                prev = w;
            }
            Some(total)
        }
        let latent = self.z_s_dim.checked_add(self.z_ns_dim)?;
        let mut total = mlp(self.input_dim, &self.encoder_hidden, latent)?;
        total = total.checked_add(mlp(latent, &self.decoder_hidden, self.input_dim)?)?;
        total = total.checked_add(mlp(self.z_ns_dim, &self.disc_hidden, self.n_sensitive_classes)?)?;
        if self.z_s_dim > 0 {
            total = total.checked_add(mlp(self.z_s_dim, &[], self.n_sensitive_classes)?)?;
        }
        Some(total)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |what: &str| Err(ModelError::Config(format!("{what} must be positive")));
        if self.input_dim == 0 {
            return bad("input_dim");
        }
        if self.z_ns_dim == 0 {
            return bad("z_ns_dim");
        }
        if self.n_sensitive_classes < 2 {
            return Err(ModelError::Config(format!(
                "need at least 2 sensitive classes, got {}",
                self.n_sensitive_classes
            )));
        }
        for (name, widths) in [
            ("encoder", &self.encoder_hidden),
            ("decoder", &self.decoder_hidden),
            ("discriminator", &self.disc_hidden),
        ] {
            if widths.contains(&0) {
                return Err(ModelError::Config(format!(
                    "{name} hidden widths must be positive, got {widths:?}"
                )));
            }
        }
        Ok(())
    }
}

/// A batch of latent codes split into the keyed and released slices.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    /// `None` when the model has no keyed capsule (`z_s_dim == 0`).
    pub z_s: Option<Tensor>,
    pub z_ns: Tensor,
}

impl LatentCode {
    pub fn batch(&self) -> usize {
        self.z_ns.rows()
    }

    /// `[z_s | z_ns]`, the raw encoder output.
    pub fn concat(&self) -> Tensor {
        match &self.z_s {
            None => self.z_ns.clone(),
            Some(zs) => {
                let mut data = Vec::with_capacity(zs.len() + self.z_ns.len());
                for i in 0..self.batch() {
                    data.extend_from_slice(zs.row(i));
                    data.extend_from_slice(self.z_ns.row(i));
                }
                Tensor::new(&[self.batch(), zs.cols() + self.z_ns.cols()], data).expect("consistent batch")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LspModel {
    pub spec: ModelSpec,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub discriminator: Mlp,
    /// Cooperative predictor of `s` from `z_s`; absent when `z_s_dim == 0`.
    pub sens_head: Option<Mlp>,
}

/// Tape handles for every network of a bound model.
#[derive(Clone, Debug)]
pub struct LspVars {
    pub encoder: MlpVars,
    pub decoder: MlpVars,
    pub discriminator: MlpVars,
    pub sens_head: Option<MlpVars>,
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = Vec::with_capacity(hidden.len() + 2);
    w.push(input);
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

/// Glorot-initialized model, deterministic in `seed`.
pub fn init_model(spec: &ModelSpec, seed: u64) -> Result<LspModel, ModelError> {
    spec.validate()?;
    let mut rng = rng::derived(seed, rng::component::MODEL_INIT);
    let latent = spec.latent_dim();
    let encoder = Mlp::new(
        "encoder",
        &widths(spec.input_dim, &spec.encoder_hidden, latent),
        Activation::LeakyRelu(ENCODER_LEAKY_SLOPE),
        0.0,
        &mut rng,
    );
    let decoder = Mlp::new(
        "decoder",
        &widths(latent, &spec.decoder_hidden, spec.input_dim),
        Activation::Relu,
        0.0,
        &mut rng,
    );
    let discriminator = Mlp::new(
        "discriminator",
        &widths(spec.z_ns_dim, &spec.disc_hidden, spec.n_sensitive_classes),
        Activation::LeakyRelu(DISCRIMINATOR_LEAKY_SLOPE),
        DISCRIMINATOR_DROPOUT,
        &mut rng,
    );
    let sens_head = (spec.z_s_dim > 0).then(|| {
        Mlp::new(
            "sens_head",
            &[spec.z_s_dim, spec.n_sensitive_classes],
            Activation::Relu,
            0.0,
            &mut rng,
        )
    });
    Ok(LspModel {
        spec: spec.clone(),
        encoder,
        decoder,
        discriminator,
        sens_head,
    })
}

/// Gradient-reversal layer: identity forward, gradient scaled by `-lambda`
/// on the way back.
pub fn grad_reverse(tape: &mut Tape, z: Var, lambda: f64) -> Result<Var, ModelError> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(ModelError::Config(format!(
            "reversal weight must be non-negative, got {lambda}"
        )));
    }
    Ok(tape.grad_reverse(z, lambda))
}

impl LspModel {
    fn check_width(&self, what: &str, x: &Tensor, expected: usize) -> Result<(), ModelError> {
        if x.shape().len() != 2 || x.cols() != expected {
            return Err(NumericsError::Shape(format!("{what} expects batch×{expected}, got {:?}", x.shape())).into());
        }
        Ok(())
    }

    pub fn encode(&self, x: &Tensor) -> Result<LatentCode, ModelError> {
        self.check_width("encode", x, self.spec.input_dim)?;
        let z = self.encoder.infer(x)?.map(f64::tanh);
        Ok(self.split(&z))
    }

    /// Taped encoder pass, including the latent `tanh`.
    pub fn encode_var(&self, tape: &mut Tape, vars: &MlpVars, x: Var) -> Result<Var, ModelError> {
        let z = self.encoder.forward(tape, vars, x, None)?;
        Ok(tape.tanh(z))
    }

    fn split(&self, z: &Tensor) -> LatentCode {
        let zs = self.spec.z_s_dim;
        LatentCode {
            z_s: (zs > 0).then(|| z.slice_cols(0, zs)),
            z_ns: z.slice_cols(zs, zs + self.spec.z_ns_dim),
        }
    }

    pub fn decode(&self, code: &LatentCode) -> Result<Tensor, ModelError> {
        self.check_width("decode (z_ns)", &code.z_ns, self.spec.z_ns_dim)?;
        match (&code.z_s, self.spec.z_s_dim) {
            (None, 0) => {}
            (Some(zs), d) if d > 0 => {
                self.check_width("decode (z_s)", zs, d)?;
                if zs.rows() != code.z_ns.rows() {
                    return Err(NumericsError::Shape(format!(
                        "z_s has {} rows but z_ns has {}",
                        zs.rows(),
                        code.z_ns.rows()
                    ))
                    .into());
                }
            }
            _ => {
                return Err(ModelError::Config(format!(
                    "latent code does not match z_s_dim = {}",
                    self.spec.z_s_dim
                )))
            }
        }
        Ok(self.decoder.infer(&code.concat())?)
    }

    /// Decodes from the released slice alone, with `z_s` replaced by zeros.
    pub fn decode_obfuscated(&self, z_ns: &Tensor) -> Result<Tensor, ModelError> {
        self.check_width("decode_obfuscated", z_ns, self.spec.z_ns_dim)?;
        let z_s = (self.spec.z_s_dim > 0).then(|| Tensor::zeros(&[z_ns.rows(), self.spec.z_s_dim]));
        self.decode(&LatentCode {
            z_s,
            z_ns: z_ns.clone(),
        })
    }

    /// Discriminator class probabilities for the released slice. Dropout is
    /// active only when an RNG is supplied.
    pub fn discriminate(&self, z_ns: &Tensor, dropout_rng: Option<&mut Rng>) -> Result<Tensor, ModelError> {
        self.check_width("discriminate", z_ns, self.spec.z_ns_dim)?;
        let logits = match dropout_rng {
            None => self.discriminator.infer(z_ns)?,
            Some(rng) => {
                let mut tape = Tape::new();
                let vars = self.discriminator.bind(&mut tape);
                let x = tape.constant(z_ns.clone());
                let out = self.discriminator.forward(&mut tape, &vars, x, Some(rng))?;
                tape.value(out).clone()
            }
        };
        Ok(softmax_rows(&logits)?)
    }

    /// Sensitive-class probabilities from the keyed capsule.
    pub fn predict_sensitive(&self, z_s: &Tensor) -> Result<Tensor, ModelError> {
        let head = self
            .sens_head
            .as_ref()
            .ok_or_else(|| ModelError::Config("model has no z_s capsule".into()))?;
        self.check_width("predict_sensitive", z_s, self.spec.z_s_dim)?;
        Ok(softmax_rows(&head.infer(z_s)?)?)
    }

    pub fn bind(&self, tape: &mut Tape) -> LspVars {
        LspVars {
            encoder: self.encoder.bind(tape),
            decoder: self.decoder.bind(tape),
            discriminator: self.discriminator.bind(tape),
            sens_head: self.sens_head.as_ref().map(|h| h.bind(tape)),
        }
    }

    pub fn accumulate(&mut self, vars: &LspVars, grads: &Gradients) -> Result<(), ModelError> {
        self.encoder.accumulate(&vars.encoder, grads)?;
        self.decoder.accumulate(&vars.decoder, grads)?;
        self.discriminator.accumulate(&vars.discriminator, grads)?;
        if let (Some(h), Some(v)) = (&mut self.sens_head, &vars.sens_head) {
            h.accumulate(v, grads)?;
        }
        Ok(())
    }

    /// All parameters in serialization order: encoder, decoder,
    /// discriminator, sens_head; weight before bias within each layer.
    pub fn params(&self) -> Vec<&Parameter> {
        let mut out: Vec<&Parameter> = self.encoder.params().collect();
        out.extend(self.decoder.params());
        out.extend(self.discriminator.params());
        if let Some(h) = &self.sens_head {
            out.extend(h.params());
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out: Vec<&mut Parameter> = self.encoder.params_mut().collect();
        out.extend(self.decoder.params_mut());
        out.extend(self.discriminator.params_mut());
        if let Some(h) = &mut self.sens_head {
            out.extend(h.params_mut());
        }
        out
    }

    /// Per-parameter learning-rate multipliers in `params()` order:
    /// `disc_scale` for the discriminator, 1 elsewhere.
    pub fn lr_scales(&self, disc_scale: f64) -> Vec<f64> {
        let before = self.encoder.params().count() + self.decoder.params().count();
        let disc = self.discriminator.params().count();
        let after = self.sens_head.as_ref().map_or(0, |h| h.params().count());
        let mut out = vec![1.0; before];
        out.extend(std::iter::repeat_n(disc_scale, disc));
        out.extend(std::iter::repeat_n(1.0, after));
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Parameter::zero_grad);
    }

    /// Rounds every parameter to the nearest `f32`. Parameters are stored
    /// at 32-bit precision so that on-disk models reload bit-exactly.
    pub fn round_params_to_f32(&mut self) {
        for p in self.params_mut() {
            p.value.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }
}
