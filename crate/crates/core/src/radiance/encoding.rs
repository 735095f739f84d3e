use std::f64::consts::{PI, TAU};

use crate::scene::LATENT_DIM;
use crate::{Error, Result};

/// Encoded width: latent, view direction with one sin/cos band, and
/// `(sin θ, cos θ)`.
pub const INPUT_DIM: usize = LATENT_DIM + 9 + 2;

const ANGLE_STEPS: f64 = (1u64 << 36) as f64;

/// Reduce a light rotation to `[0, 2π)` on a fixed grid of `2π / 2^36`
/// (about 1e-10 rad), so `θ` and `θ + 2π` encode to the same bits.
pub fn canonical_angle(theta: f64) -> f64 {
    let k = (theta / TAU * ANGLE_STEPS).round().rem_euclid(ANGLE_STEPS);
    k / ANGLE_STEPS * TAU
}

/// Layout: `latent[0..8]`, view `(x, y, z)`, `sin(π·view)`, `cos(π·view)`,
/// then `sin θ`, `cos θ`. The raw angle is left out so the encoding is
/// exactly 2π-periodic in θ.
pub fn encode_into(latent: &[f64; LATENT_DIM], view: [f64; 3], theta: f64, out: &mut [f64]) {
    out[..LATENT_DIM].copy_from_slice(latent);
    let o = LATENT_DIM;
    for k in 0..3 {
        let (s, c) = (PI * view[k]).sin_cos();
        out[o + k] = view[k];
        out[o + 3 + k] = s;
        out[o + 6 + k] = c;
    }
    let (s, c) = canonical_angle(theta).sin_cos();
    out[o + 9] = s;
    out[o + 10] = c;
}

pub fn encode_inputs(latent: &[f64; LATENT_DIM], view_dir: [f64; 3], theta: f64) -> Result<[f64; INPUT_DIM]> {
    let n = view_dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !((n - 1.0).abs() <= 1e-6) {
        return Err(Error::invalid(format!("view direction must be unit length (|v| = {n})")));
    }
    if !theta.is_finite() || !latent.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("encoder inputs must be finite"));
    }
    let mut out = [0.0; INPUT_DIM];
    encode_into(latent, view_dir, theta, &mut out);
    Ok(out)
}

/// Chain an input-space gradient back to the view direction components.
pub fn view_grad(view: [f64; 3], grad_input: &[f64]) -> [f64; 3] {
    let o = LATENT_DIM;
    [0, 1, 2].map(|k| {
        let (s, c) = (PI * view[k]).sin_cos();
        grad_input[o + k] + grad_input[o + 3 + k] * PI * c - grad_input[o + 6 + k] * PI * s
    })
}
