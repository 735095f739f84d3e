//! Photometric loss: a mix of mean absolute error and structural
//! dissimilarity (SSIM with an 11-tap Gaussian window, σ = 1.5).

use crate::scene::ImageBuffer;
use crate::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - r;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable "same" convolution with zero padding on a single-channel plane.
/// The kernel is symmetric, so this is also its own adjoint.
fn blur(src: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let xx = x as isize + k as isize - r;
                if xx >= 0 && (xx as usize) < w {
                    acc += t * src[y * w + xx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let yy = y as isize + k as isize - r;
                if yy >= 0 && (yy as usize) < h {
                    acc += t * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn channel(img: &ImageBuffer, c: usize) -> Vec<f64> {
    img.data.iter().skip(c).step_by(3).copied().collect()
}

/// Mean SSIM over pixels and channels, with its gradient with respect to
/// `pred` when `want_grad` is set.
pub fn ssim(pred: &ImageBuffer, gt: &ImageBuffer, want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
    pred.same_size(gt)?;
    let (w, h) = (pred.width as usize, pred.height as usize);
    let n = w * h;
    let taps = gaussian_taps();
    let mut total = 0.0;
    let mut grad = want_grad.then(|| vec![0.0; n * 3]);
    for c in 0..3 {
        let x = channel(pred, c);
        let y = channel(gt, c);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
        let mx = blur(&x, w, h, &taps);
        let my = blur(&y, w, h, &taps);
        let exx = blur(&xx, w, h, &taps);
        let eyy = blur(&yy, w, h, &taps);
        let exy = blur(&xy, w, h, &taps);
        let mut d_mx = vec![0.0; n];
        let mut d_exx = vec![0.0; n];
        let mut d_exy = vec![0.0; n];
        for p in 0..n {
            let a1 = 2.0 * mx[p] * my[p] + C1;
            let a2 = 2.0 * (exy[p] - mx[p] * my[p]) + C2;
            let b1 = mx[p] * mx[p] + my[p] * my[p] + C1;
            let b2 = (exx[p] - mx[p] * mx[p]) + (eyy[p] - my[p] * my[p]) + C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            if want_grad {
                d_mx[p] = s * (2.0 * my[p] / a1 - 2.0 * my[p] / a2 - 2.0 * mx[p] / b1 + 2.0 * mx[p] / b2);
                d_exx[p] = -s / b2;
                d_exy[p] = 2.0 * s / a2;
            }
        }
        if let Some(g) = grad.as_mut() {
            let gm = blur(&d_mx, w, h, &taps);
            let ge = blur(&d_exx, w, h, &taps);
            let gc = blur(&d_exy, w, h, &taps);
            for p in 0..n {
                g[p * 3 + c] = (gm[p] + 2.0 * x[p] * ge[p] + y[p] * gc[p]) / (3 * n) as f64;
            }
        }
    }
    Ok((total / (3 * n) as f64, grad))
}

/// `(1 - λ)·L1 + λ·(1 - SSIM)` and its gradient with respect to `pred`.
pub fn loss(pred: &ImageBuffer, gt: &ImageBuffer, lambda: f64) -> Result<(f64, Vec<f64>)> {
    pred.same_size(gt)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("loss mix {lambda} outside [0, 1]")));
    }
    let count = pred.data.len() as f64;
    let mut l1 = 0.0;
    let mut grad: Vec<f64> = pred
        .data
        .iter()
        .zip(&gt.data)
        .map(|(p, g)| {
            let d = p - g;
            l1 += d.abs();
            let s = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
            (1.0 - lambda) * s / count
        })
        .collect();
    l1 /= count;
    let mut value = (1.0 - lambda) * l1;
    if lambda > 0.0 {
        let (s, sg) = ssim(pred, gt, true)?;
        value += lambda * (1.0 - s);
        for (g, d) in grad.iter_mut().zip(sg.unwrap()) {
            *g -= lambda * d;
        }
    }
    Ok((value.max(0.0), grad))
}
