//! Central finite-difference check of tape gradients.
//!
//! Kink policy: a coordinate whose `±h` perturbation changes the sign pattern
//! of any piecewise-linear activation input (see [`Tape::kink_signature`])
//! straddles a kink. Such coordinates are reported in
//! [`GradCheckReport::kinks`] and left out of the error maximum.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::NumericsError;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max_i |analytic_i − central_i| / max(1, |central_i|)` over checked
    /// coordinates.
    pub max_relative_error: f64,
    pub checked: usize,
    /// Coordinates excluded because they straddle an activation kink.
    pub kinks: Vec<usize>,
}

fn eval<F>(f: &F, x: &Tensor) -> Result<(f64, Vec<bool>), NumericsError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, NumericsError>,
{
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let out = f(&mut tape, xv)?;
    let v = tape.value(out);
    if !v.is_scalar() {
        return Err(NumericsError::Contract(format!(
            "gradient check needs a scalar function, got shape {:?}",
            v.shape()
        )));
    }
    Ok((v.data()[0], tape.kink_signature().to_vec()))
}

/// Compares the tape gradient of the scalar function `f` at `x` against
/// central differences with step `h`.
pub fn finite_diff_check<F>(f: F, x: &Tensor, h: f64) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, NumericsError>,
{
    if h.is_nan() || h <= 0.0 {
        return Err(NumericsError::Contract(format!("step size must be positive, got {h}")));
    }
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let out = f(&mut tape, xv)?;
    let analytic = tape.backward(out)?.take(xv).expect("x is a parameter");
    let base_signature = tape.kink_signature().to_vec();

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        kinks: Vec::new(),
    };
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let (fp, sig_p) = eval(&f, &probe)?;
        probe.data_mut()[i] = orig - h;
        let (fm, sig_m) = eval(&f, &probe)?;
        probe.data_mut()[i] = orig;

        if !fp.is_finite() || !fm.is_finite() {
            return Err(NumericsError::NonFinite {
                context: format!("finite difference at coordinate {i}"),
            });
        }
        if sig_p != base_signature || sig_m != base_signature {
            report.kinks.push(i);
            continue;
        }
        let central = (fp - fm) / (2.0 * h);
        let err = (analytic.data()[i] - central).abs() / central.abs().max(1.0);
        report.max_relative_error = report.max_relative_error.max(err);
        report.checked += 1;
    }
    Ok(report)
}
