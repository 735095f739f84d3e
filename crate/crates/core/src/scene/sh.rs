//! Real spherical harmonics.
//!
//! Coefficients are indexed `l * l + l + m` for `m in -l..=l`. The basis has
//! no Condon-Shortley phase: `Y_1^{-1} ∝ y`, `Y_1^0 ∝ z`, `Y_1^1 ∝ x`.

use std::f64::consts::PI;

/// Number of coefficients for bands `0..=degree`.
pub const fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

#[inline]
pub const fn index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Evaluate every basis function up to `degree` at the unit direction `d`,
/// writing `coeff_count(degree)` values into `out`.
pub fn basis_into(degree: usize, d: [f64; 3], out: &mut [f64]) {
    let [x, y, z] = d;
    debug_assert!(out.len() >= coeff_count(degree));
    // (x + iy)^m carries the sin^m(theta) factor and the azimuthal phase.
    let mut re = 1.0;
    let mut im = 0.0;
    let mut p_mm = 1.0; // (2m-1)!!
    for m in 0..=degree {
        if m > 0 {
            let (nr, ni) = (re * x - im * y, re * y + im * x);
            re = nr;
            im = ni;
            p_mm *= (2 * m - 1) as f64;
        }
        // Associated Legendre without the (1 - z^2)^(m/2) factor.
        let mut p_prev = 0.0;
        let mut p_cur = p_mm;
        for l in m..=degree {
            if l == m + 1 {
                p_prev = p_cur;
                p_cur = z * (2 * m + 1) as f64 * p_mm;
            } else if l > m + 1 {
                let next = ((2 * l - 1) as f64 * z * p_cur - (l + m - 1) as f64 * p_prev)
                    / (l - m) as f64;
                p_prev = p_cur;
                p_cur = next;
            }
            let k = ((2 * l + 1) as f64 / (4.0 * PI) * factorial(l - m) / factorial(l + m)).sqrt();
            let base = l * l + l;
            if m == 0 {
                out[base] = k * p_cur;
            } else {
                let s = std::f64::consts::SQRT_2 * k * p_cur;
                out[base + m] = s * re;
                out[base - m] = s * im;
            }
        }
    }
}

/// Basis values plus their gradient with respect to the direction, as the
/// gradient of the polynomial extension of each basis function off the
/// sphere. Only the component tangent to the sphere is meaningful; callers
/// chaining through a normalization project the radial part away.
pub fn basis_grad_into(degree: usize, d: [f64; 3], out: &mut [f64], grad: &mut [[f64; 3]]) {
    let [x, y, z] = d;
    let mut re = 1.0;
    let mut im = 0.0;
    let mut re_g = [0.0; 3];
    let mut im_g = [0.0; 3];
    let mut p_mm = 1.0;
    for m in 0..=degree {
        if m > 0 {
            let nr = re * x - im * y;
            let ni = re * y + im * x;
            let nr_g = [re_g[0] * x - im_g[0] * y + re, re_g[1] * x - im_g[1] * y - im, re_g[2] * x - im_g[2] * y];
            let ni_g = [re_g[0] * y + im_g[0] * x + im, re_g[1] * y + im_g[1] * x + re, re_g[2] * y + im_g[2] * x];
            re = nr;
            im = ni;
            re_g = nr_g;
            im_g = ni_g;
            p_mm *= (2 * m - 1) as f64;
        }
        let (mut p_prev, mut dp_prev) = (0.0, 0.0);
        let (mut p_cur, mut dp_cur) = (p_mm, 0.0);
        for l in m..=degree {
            if l == m + 1 {
                p_prev = p_cur;
                dp_prev = dp_cur;
                p_cur = z * (2 * m + 1) as f64 * p_mm;
                dp_cur = (2 * m + 1) as f64 * p_mm;
            } else if l > m + 1 {
                let a = (2 * l - 1) as f64;
                let b = (l + m - 1) as f64;
                let c = (l - m) as f64;
                let next = (a * z * p_cur - b * p_prev) / c;
                let dnext = (a * (p_cur + z * dp_cur) - b * dp_prev) / c;
                p_prev = p_cur;
                dp_prev = dp_cur;
                p_cur = next;
                dp_cur = dnext;
            }
            let k = ((2 * l + 1) as f64 / (4.0 * PI) * factorial(l - m) / factorial(l + m)).sqrt();
            let base = l * l + l;
            if m == 0 {
                out[base] = k * p_cur;
                grad[base] = [0.0, 0.0, k * dp_cur];
            } else {
                let s = std::f64::consts::SQRT_2 * k;
                out[base + m] = s * p_cur * re;
                out[base - m] = s * p_cur * im;
                grad[base + m] = [0, 1, 2].map(|i| s * (p_cur * re_g[i] + if i == 2 { dp_cur * re } else { 0.0 }));
                grad[base - m] = [0, 1, 2].map(|i| s * (p_cur * im_g[i] + if i == 2 { dp_cur * im } else { 0.0 }));
            }
        }
    }
}

pub fn basis(degree: usize, d: [f64; 3]) -> Vec<f64> {
    let mut out = vec![0.0; coeff_count(degree)];
    basis_into(degree, d, &mut out);
    out
}

/// Rotate a coefficient vector so that `f'(d) = f(Rz(-angle) d)`. Only the
/// `(m, -m)` pairs within each band mix.
pub fn rotate_z<T: Copy>(coeffs: &mut [T], degree: usize, angle: f64, mix: impl Fn(T, T, f64, f64) -> (T, T)) {
    for l in 1..=degree {
        let base = l * l + l;
        for m in 1..=l {
            let (s, c) = (m as f64 * angle).sin_cos();
            let (a, b) = (coeffs[base + m], coeffs[base - m]);
            let (na, nb) = mix(a, b, c, s);
            coeffs[base + m] = na;
            coeffs[base - m] = nb;
        }
    }
}

/// Scalar version of [`rotate_z`].
pub fn rotate_z_scalar(coeffs: &mut [f64], degree: usize, angle: f64) {
    rotate_z(coeffs, degree, angle, |a, b, c, s| (a * c - b * s, a * s + b * c));
}

/// Band factor of the clamped-cosine kernel: irradiance coefficients are
/// `kernel_band(l) * L_lm`.
pub fn cosine_lobe_band(l: usize) -> f64 {
    match l {
        0 => PI,
        1 => 2.0 * PI / 3.0,
        l if l % 2 == 1 => 0.0,
        l => {
            let half = l / 2;
            let sign = if (half - 1) % 2 == 0 { 1.0 } else { -1.0 };
            2.0 * PI * sign / (((l + 2) * (l - 1)) as f64) * factorial(l)
                / (2f64.powi(l as i32) * factorial(half) * factorial(half))
        }
    }
}

/// Unit-sphere directions on a Fibonacci spiral.
pub fn fibonacci_sphere(count: usize) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}
