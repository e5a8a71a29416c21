//! Pixel fidelity: PSNR and uniform-window SSIM.

use super::EvalError;

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::Shape(format!(
            "images hold {} and {} pixels",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(EvalError::Empty("empty image".into()));
    }
    Ok(())
}

pub fn mse(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check_pair(x, y)?;
    Ok(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64)
}

/// `10·log10(max_val² / MSE)` in dB; identical images give `+∞`.
pub fn psnr(x: &[f64], y: &[f64], max_val: f64) -> Result<f64, EvalError> {
    if max_val.is_nan() || max_val <= 0.0 {
        return Err(EvalError::Config(format!("max_val must be positive, got {max_val}")));
    }
    let e = mse(x, y)?;
    Ok(psnr_from_mse(e, max_val))
}

pub fn psnr_from_mse(mse: f64, max_val: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (max_val * max_val / mse).log10()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    /// Side of the square window.
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range `L` of pixel values.
    pub data_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 8,
            k1: 0.01,
            k2: 0.03,
            data_range: 1.0,
        }
    }
}

/// Mean SSIM over every `window × window` patch (stride 1, uniform weights,
/// population moments). `x` and `y` are row-major `height × width` images.
pub fn ssim(x: &[f64], y: &[f64], height: usize, width: usize, params: &SsimParams) -> Result<f64, EvalError> {
    check_pair(x, y)?;
    if x.len() != height * width {
        return Err(EvalError::Shape(format!(
            "{} pixels do not form a {height}×{width} image",
            x.len()
        )));
    }
    let w = params.window;
    if w == 0 || w > height || w > width {
        return Err(EvalError::Config(format!(
            "window {w}×{w} does not fit a {height}×{width} image"
        )));
    }
    let c1 = (params.k1 * params.data_range).powi(2);
    let c2 = (params.k2 * params.data_range).powi(2);
    let n = (w * w) as f64;

    let mut total = 0.0;
    let mut count = 0usize;
    for top in 0..=height - w {
        for left in 0..=width - w {
            let pix = |img: &[f64], r: usize, c: usize| img[(top + r) * width + left + c];
            let (mut sx, mut sy) = (0.0, 0.0);
            for r in 0..w {
                for c in 0..w {
                    sx += pix(x, r, c);
                    sy += pix(y, r, c);
                }
            }
            let (mx, my) = (sx / n, sy / n);
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for r in 0..w {
                for c in 0..w {
                    let dx = pix(x, r, c) - mx;
                    let dy = pix(y, r, c) - my;
                    vx += dx * dx;
                    vy += dy * dy;
                    cxy += dx * dy;
                }
            }
            let (vx, vy, cxy) = (vx / n, vy / n, cxy / n);
            let num = (2.0 * mx * my + c1) * (2.0 * cxy + c2);
            let den = (mx * mx + my * my + c1) * (vx + vy + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}
