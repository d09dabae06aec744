//! Imperceptibility metrics: squared-L2 perturbation norm, windowed SSIM and
//! Pearson correlation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{l2_sq_dist, ImageTensor};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Sum of squared pixel differences between the adversarial and clean image,
/// in native pixel units squared.
pub fn perturbation_norm(adv: &ImageTensor, clean: &ImageTensor) -> Result<f64> {
    l2_sq_dist(adv, clean)
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let x = i as f64 - half;
            (-(x * x) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let total: f64 = g.iter().sum();
    let g: Vec<f64> = g.iter().map(|v| v / total).collect();
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for gy in &g {
        for gx in &g {
            w.push(gy * gx);
        }
    }
    w
}

/// Mean SSIM over every fully-contained 11x11 Gaussian window (sigma 1.5),
/// with `C1 = (0.01 L)^2`, `C2 = (0.03 L)^2`, averaged over channels.
pub fn ssim(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.check_compatible(b)?;
    let shape = a.shape();
    if shape.height < SSIM_WINDOW || shape.width < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            height: shape.height,
            width: shape.width,
            window: SSIM_WINDOW,
        });
    }
    let c1 = (SSIM_K1 * a.range()).powi(2);
    let c2 = (SSIM_K2 * a.range()).powi(2);
    let window = gaussian_window();
    let (w, ch) = (shape.width, shape.channels);
    let pa = a.pixels();
    let pb = b.pixels();

    let out_h = shape.height - SSIM_WINDOW + 1;
    let out_w = shape.width - SSIM_WINDOW + 1;
    let mut total = 0.0;
    for c in 0..ch {
        let mut channel_sum = 0.0;
        for y0 in 0..out_h {
            for x0 in 0..out_w {
                let (mut mu_a, mut mu_b, mut e_aa, mut e_bb, mut e_ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..SSIM_WINDOW {
                    for dx in 0..SSIM_WINDOW {
                        let k = window[dy * SSIM_WINDOW + dx];
                        let idx = ((y0 + dy) * w + (x0 + dx)) * ch + c;
                        let (va, vb) = (pa[idx], pb[idx]);
                        mu_a += k * va;
                        mu_b += k * vb;
                        e_aa += k * va * va;
                        e_bb += k * vb * vb;
                        e_ab += k * va * vb;
                    }
                }
                let var_a = e_aa - mu_a * mu_a;
                let var_b = e_bb - mu_b * mu_b;
                let cov = e_ab - mu_a * mu_b;
                channel_sum += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                    / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            }
        }
        total += channel_sum / (out_h * out_w) as f64;
    }
    Ok((total / ch as f64).clamp(-1.0, 1.0))
}

/// Pearson correlation of the flattened pixel buffers.
pub fn correlation(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.check_compatible(b)?;
    let n = a.len() as f64;
    let mean_a = a.pixels().iter().sum::<f64>() / n;
    let mean_b = b.pixels().iter().sum::<f64>() / n;
    let (mut cov, mut var_a, mut var_b) = (0.0, 0.0, 0.0);
    for (x, y) in a.pixels().iter().zip(b.pixels()) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((cov / (var_a * var_b).sqrt()).clamp(-1.0, 1.0))
}

/// The metric triple reported for an adversarial image. SSIM is absent for
/// images smaller than the window, correlation for constant images.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImperceptibilityMetrics {
    pub perturbation_norm: f64,
    pub ssim: Option<f64>,
    pub correlation: Option<f64>,
}

impl ImperceptibilityMetrics {
    pub fn evaluate(adv: &ImageTensor, clean: &ImageTensor) -> Result<Self> {
        let perturbation_norm = perturbation_norm(adv, clean)?;
        let ssim = match ssim(adv, clean) {
            Ok(v) => Some(v),
            Err(Error::ImageTooSmall { .. }) => None,
            Err(e) => return Err(e),
        };
        let correlation = match correlation(adv, clean) {
            Ok(v) => Some(v),
            Err(Error::ZeroVariance) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            perturbation_norm,
            ssim,
            correlation,
        })
    }
}
