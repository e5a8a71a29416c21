//! Joint adversarial training of the encoder, decoder, sensitive head and
//! privacy discriminator.
//!
//! Per batch the objective is
//!
//! ```text
//! L = MSE(x, D(E(x))) + alpha_sens · CE(H(z_s), s) + CE(P(GRL_λ(z_ns)), s)
//! ```
//!
//! All four networks take one Adam step on `∇L`. The discriminator `P`
//! descends its cross-entropy directly; the reversal layer `GRL_λ` flips the
//! sign of that gradient (scaled by `λ`) before it reaches the encoder, so
//! the encoder ascends it. The discriminator's step size is multiplied by
//! `disc_lr_scale`: with equal step sizes the encoder keeps one move ahead
//! of a discriminator that never catches up, and the released slice stays
//! informative to a freshly trained attacker.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::data::{save_model, DataError, Dataset};
use crate::model::{grad_reverse, LspModel, LspVars, ModelError};
use crate::numerics::{AdamConfig, AdamState, NumericsError, Tape, Tensor, Var};
use crate::rng::{self, component, Rng};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training configuration: {0}")]
    Config(String),
    #[error("sensitive label {label} at row {row} is outside 0..{classes}")]
    Label { row: usize, label: usize, classes: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl From<NumericsError> for TrainError {
    fn from(e: NumericsError) -> Self {
        match e {
            NumericsError::Label { row, label, classes } => TrainError::Label { row, label, classes },
            other => TrainError::Model(other.into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub z_s_dim: usize,
    pub z_ns_dim: usize,
    /// Privacy weight λ of the reversal layer.
    pub lambda_priv: f64,
    pub alpha_sens: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning-rate multiplier for the discriminator's parameters, so the
    /// adversary adapts faster than the encoder it is chasing.
    pub disc_lr_scale: f64,
    pub seed: u64,
    /// Write a checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            z_s_dim: 2,
            z_ns_dim: 8,
            lambda_priv: 0.2,
            alpha_sens: 1.0,
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            disc_lr_scale: 100.0,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: String| Err(TrainError::Config(m));
        if !self.lambda_priv.is_finite() || self.lambda_priv < 0.0 {
            return fail(format!("lambda_priv must be finite and >= 0, got {}", self.lambda_priv));
        }
        if !self.alpha_sens.is_finite() || self.alpha_sens < 0.0 {
            return fail(format!("alpha_sens must be finite and >= 0, got {}", self.alpha_sens));
        }
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return fail(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !self.disc_lr_scale.is_finite() || self.disc_lr_scale <= 0.0 {
            return fail(format!("disc_lr_scale must be > 0, got {}", self.disc_lr_scale));
        }
        if self.z_ns_dim == 0 {
            return fail("z_ns_dim must be >= 1".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

/// Per-epoch means of each loss component.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub recon_loss: f64,
    pub disc_loss: f64,
    pub sens_loss: f64,
    pub disc_train_accuracy: f64,
    /// Wall-clock time; the only non-deterministic field.
    pub wall_time_ms: f64,
}

impl EpochStats {
    /// Equality on everything except timing.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.epoch == other.epoch
            && self.recon_loss.to_bits() == other.recon_loss.to_bits()
            && self.disc_loss.to_bits() == other.disc_loss.to_bits()
            && self.sens_loss.to_bits() == other.sens_loss.to_bits()
            && self.disc_train_accuracy.to_bits() == other.disc_train_accuracy.to_bits()
    }
}

/// Tape handles for one evaluation of the objective.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub recon: Var,
    /// `None` when the model has no keyed capsule.
    pub sens: Option<Var>,
    pub adv: Var,
    pub disc_logits: Var,
}

/// Scalar values of the objective and its components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValues {
    pub total: f64,
    pub recon: f64,
    pub sens: f64,
    pub adv: f64,
}

/// Records the full objective on `tape`. Dropout in the discriminator is
/// active only when `dropout_rng` is supplied.
#[allow(clippy::too_many_arguments)]
pub fn record_loss(
    model: &LspModel,
    tape: &mut Tape,
    vars: &LspVars,
    x: &Tensor,
    s: &[usize],
    lambda_priv: f64,
    alpha_sens: f64,
    dropout_rng: Option<&mut Rng>,
) -> Result<LossVars, TrainError> {
    if s.len() != x.rows() {
        return Err(TrainError::Config(format!(
            "{} sensitive labels for {} rows",
            s.len(),
            x.rows()
        )));
    }
    let classes = model.spec.n_sensitive_classes;
    if let Some((row, &label)) = s.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(TrainError::Label { row, label, classes });
    }
    let (zs_dim, zns_dim) = (model.spec.z_s_dim, model.spec.z_ns_dim);

    let xv = tape.constant(x.clone());
    let z = model.encode_var(tape, &vars.encoder, xv)?;
    let recon_x = model.decoder.forward(tape, &vars.decoder, z, None)?;
    let recon = tape.mse(recon_x, xv)?;

    let z_ns = tape.slice_cols(z, zs_dim, zs_dim + zns_dim)?;
    let reversed = grad_reverse(tape, z_ns, lambda_priv)?;
    let disc_logits = model
        .discriminator
        .forward(tape, &vars.discriminator, reversed, dropout_rng)?;
    let adv = tape.softmax_cross_entropy(disc_logits, s)?;

    let mut total = tape.add(recon, adv)?;
    let mut sens = None;
    if let (Some(head), Some(head_vars)) = (&model.sens_head, &vars.sens_head) {
        let z_s = tape.slice_cols(z, 0, zs_dim)?;
        let logits = head.forward(tape, head_vars, z_s, None)?;
        let ce = tape.softmax_cross_entropy(logits, s)?;
        let weighted = tape.scale(ce, alpha_sens);
        total = tape.add(total, weighted)?;
        sens = Some(ce);
    }
    Ok(LossVars {
        total,
        recon,
        sens,
        adv,
        disc_logits,
    })
}

/// Evaluates the objective deterministically (dropout off).
pub fn loss_total(model: &LspModel, x: &Tensor, s: &[usize], config: &TrainConfig) -> Result<LossValues, TrainError> {
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let l = record_loss(
        model,
        &mut tape,
        &vars,
        x,
        s,
        config.lambda_priv,
        config.alpha_sens,
        None,
    )?;
    let v = |var: Var| tape.value(var).data()[0];
    Ok(LossValues {
        total: v(l.total),
        recon: v(l.recon),
        sens: l.sens.map_or(0.0, v),
        adv: v(l.adv),
    })
}

/// Row order for epoch `epoch`: Fisher–Yates with an RNG derived from the
/// master seed and the epoch number alone.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut r = rng::derived(seed, component::SHUFFLE_BASE + epoch as u64);
    idx.shuffle(&mut r);
    idx
}

fn sensitive_labels(dataset: &Dataset) -> Result<&[usize], TrainError> {
    Ok(dataset.sensitive()?)
}

/// One pass over shuffled minibatches with one joint Adam step per batch.
/// `epoch` is zero-based and selects the shuffle and dropout streams.
pub fn train_epoch(
    model: &mut LspModel,
    dataset: &Dataset,
    config: &TrainConfig,
    optimizer: &mut AdamState,
    epoch: usize,
) -> Result<EpochStats, TrainError> {
    let started = Instant::now();
    let s_all = sensitive_labels(dataset)?;
    let n = dataset.len();
    let order = epoch_order(n, config.seed, epoch);
    let mut dropout_rng = rng::derived(rng::derive_seed(config.seed, component::DROPOUT), epoch as u64);

    let lr_scales = model.lr_scales(config.disc_lr_scale);
    let (mut recon_sum, mut disc_sum, mut sens_sum, mut correct) = (0.0, 0.0, 0.0, 0usize);
    let mut tape = Tape::new();
    for (batch_idx, rows) in order.chunks(config.batch_size).enumerate() {
        let x = dataset.x.select_rows(rows);
        let s: Vec<usize> = rows.iter().map(|&r| s_all[r]).collect();

        tape.reset();
        let vars = model.bind(&mut tape);
        let l = record_loss(
            model,
            &mut tape,
            &vars,
            &x,
            &s,
            config.lambda_priv,
            config.alpha_sens,
            Some(&mut dropout_rng),
        )
        .map_err(|e| match e {
            TrainError::Label { row, label, classes } => TrainError::Label {
                row: rows[row],
                label,
                classes,
            },
            other => other,
        })?;
        let total = tape.value(l.total).data()[0];
        if !total.is_finite() {
            return Err(TrainError::NonFinite {
                epoch,
                batch: batch_idx,
            });
        }
        let grads = tape.backward(l.total)?;
        model.accumulate(&vars, &grads)?;
        optimizer.step_scaled(&mut model.params_mut(), &lr_scales)?;
        model.round_params_to_f32();

        let m = rows.len() as f64;
        recon_sum += tape.value(l.recon).data()[0] * m;
        disc_sum += tape.value(l.adv).data()[0] * m;
        sens_sum += l.sens.map_or(0.0, |v| tape.value(v).data()[0]) * m;
        let logits = tape.value(l.disc_logits);
        correct += s
            .iter()
            .enumerate()
            .filter(|&(i, &label)| argmax(logits.row(i)) == label)
            .count();
    }
    let n = n as f64;
    Ok(EpochStats {
        epoch,
        recon_loss: recon_sum / n,
        disc_loss: disc_sum / n,
        sens_loss: sens_sum / n,
        disc_train_accuracy: correct as f64 / n,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Runs `config.epochs` epochs. When `checkpoint_dir` is given and
/// `checkpoint_every > 0`, writes `checkpoint_epoch_<k>.lspm` after every
/// `checkpoint_every`-th epoch (1-based `k`).
pub fn train(
    mut model: LspModel,
    dataset: &Dataset,
    config: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<(LspModel, Vec<EpochStats>), TrainError> {
    config.validate()?;
    if model.spec.z_s_dim != config.z_s_dim || model.spec.z_ns_dim != config.z_ns_dim {
        return Err(TrainError::Config(format!(
            "model latent split ({}, {}) does not match config ({}, {})",
            model.spec.z_s_dim, model.spec.z_ns_dim, config.z_s_dim, config.z_ns_dim
        )));
    }
    if dataset.x.cols() != model.spec.input_dim {
        return Err(TrainError::Config(format!(
            "dataset has {} features, model expects {}",
            dataset.x.cols(),
            model.spec.input_dim
        )));
    }
    model.zero_grad();
    let mut optimizer = AdamState::new(config.adam());
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let stats = train_epoch(&mut model, dataset, config, &mut optimizer, epoch)?;
        history.push(stats);
        if let Some(dir) = checkpoint_dir {
            if config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0 {
                save_model(&model, &dir.join(format!("checkpoint_epoch_{}.lspm", epoch + 1)))?;
            }
        }
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests;
