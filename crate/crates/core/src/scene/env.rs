use super::sh;
use crate::{Error, Result};

pub const DEFAULT_ENV_DEGREE: usize = 4;

/// Distant environment illumination as real SH coefficients per RGB channel.
/// The up axis is world z, which is also the turntable axis.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvLight {
    degree: usize,
    coeffs: Vec<[f64; 3]>,
}

impl EnvLight {
    pub fn new(degree: usize, coeffs: Vec<[f64; 3]>) -> Result<Self> {
        if coeffs.len() != sh::coeff_count(degree) {
            return Err(Error::invalid(format!(
                "degree {degree} needs {} coefficients, got {}",
                sh::coeff_count(degree),
                coeffs.len()
            )));
        }
        if !coeffs.iter().flatten().all(|c| c.is_finite()) {
            return Err(Error::invalid("environment coefficients must be finite"));
        }
        Ok(EnvLight { degree, coeffs })
    }

    /// Constant radiance `rgb` in every direction.
    pub fn constant(rgb: [f64; 3]) -> Self {
        let y00 = 0.5 / std::f64::consts::PI.sqrt();
        EnvLight {
            degree: 0,
            coeffs: vec![rgb.map(|c| c / y00)],
        }
    }

    /// Band-limited sum of directional lobes plus a constant ambient term.
    /// Each lobe is a delta of total power `color` projected to `degree` and
    /// softened by `exp(-softness * l (l + 1))` per band.
    pub fn from_lobes(
        degree: usize,
        ambient: [f64; 3],
        lobes: &[([f64; 3], [f64; 3])],
        softness: f64,
    ) -> Result<Self> {
        let mut coeffs = vec![[0.0; 3]; sh::coeff_count(degree)];
        let y00 = 0.5 / std::f64::consts::PI.sqrt();
        for c in 0..3 {
            coeffs[0][c] = ambient[c] / y00;
        }
        let mut b = vec![0.0; coeffs.len()];
        for (dir, color) in lobes {
            let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
            if n == 0.0 {
                return Err(Error::invalid("lobe direction must be non-zero"));
            }
            sh::basis_into(degree, dir.map(|v| v / n), &mut b);
            for l in 0..=degree {
                let att = (-softness * (l * (l + 1)) as f64).exp();
                for i in l * l..(l + 1) * (l + 1) {
                    for c in 0..3 {
                        coeffs[i][c] += color[c] * att * b[i];
                    }
                }
            }
        }
        EnvLight::new(degree, coeffs)
    }

    /// The default studio light: warm key from the upper front, cool fill from
    /// the opposite side, a dim rim from below the horizon and a soft ambient.
    pub fn studio() -> Self {
        EnvLight::from_lobes(
            DEFAULT_ENV_DEGREE,
            [0.10, 0.10, 0.11],
            &[
                ([0.8, 0.3, 0.55], [1.7, 1.5, 1.2]),
                ([-0.6, -0.7, 0.3], [0.35, 0.45, 0.7]),
                ([-0.2, 0.9, -0.4], [0.5, 0.25, 0.2]),
            ],
            0.06,
        )
        .expect("studio preset is valid")
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[[f64; 3]] {
        &self.coeffs
    }

    /// Unclamped SH reconstruction along a unit direction.
    pub fn eval_raw(&self, d: [f64; 3]) -> [f64; 3] {
        let mut b = [0.0; 25];
        let mut out = [0.0; 3];
        if self.degree <= 4 {
            sh::basis_into(self.degree, d, &mut b);
            for (bi, c) in b.iter().zip(&self.coeffs) {
                for k in 0..3 {
                    out[k] += bi * c[k];
                }
            }
        } else {
            for (bi, c) in sh::basis(self.degree, d).iter().zip(&self.coeffs) {
                for k in 0..3 {
                    out[k] += bi * c[k];
                }
            }
        }
        out
    }

    /// Radiance arriving from direction `d`, negative values clamped to zero.
    pub fn eval_clamped(&self, d: [f64; 3]) -> [f64; 3] {
        self.eval_raw(d).map(|v| v.max(0.0))
    }

    /// Irradiance on a surface with unit normal `n` (clamped-cosine
    /// convolution), clamped to zero.
    pub fn irradiance(&self, n: [f64; 3]) -> [f64; 3] {
        let b = sh::basis(self.degree, n);
        let mut out = [0.0; 3];
        for l in 0..=self.degree {
            let k = sh::cosine_lobe_band(l);
            if k == 0.0 {
                continue;
            }
            for i in l * l..(l + 1) * (l + 1) {
                for c in 0..3 {
                    out[c] += k * b[i] * self.coeffs[i][c];
                }
            }
        }
        out.map(|v| v.max(0.0))
    }

    /// Rotated copy: `eval(rotated, d) == eval(self, Rz(-angle) d)`.
    pub fn rotated(&self, angle: f64) -> Self {
        let mut coeffs = self.coeffs.clone();
        sh::rotate_z(&mut coeffs, self.degree, angle, |a, b, c, s| {
            (
                [0, 1, 2].map(|k| a[k] * c - b[k] * s),
                [0, 1, 2].map(|k| a[k] * s + b[k] * c),
            )
        });
        EnvLight {
            degree: self.degree,
            coeffs,
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        EnvLight {
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| c.map(|v| v * k)).collect(),
        }
    }

    /// Attenuate band `l` by `exp(-beta * l (l + 1))`. `beta = inf` keeps only
    /// the constant term.
    pub fn smoothed(&self, beta: f64) -> Self {
        let mut coeffs = self.coeffs.clone();
        for l in 1..=self.degree {
            let att = if beta.is_infinite() {
                0.0
            } else {
                (-beta * (l * (l + 1)) as f64).exp()
            };
            for c in &mut coeffs[l * l..(l + 1) * (l + 1)] {
                *c = c.map(|v| v * att);
            }
        }
        EnvLight {
            degree: self.degree,
            coeffs,
        }
    }

    /// Per-band, per-channel L2 norms of the coefficients.
    pub fn band_norms(&self) -> Vec<[f64; 3]> {
        (0..=self.degree)
            .map(|l| {
                let mut n = [0.0; 3];
                for c in &self.coeffs[l * l..(l + 1) * (l + 1)] {
                    for k in 0..3 {
                        n[k] += c[k] * c[k];
                    }
                }
                n.map(f64::sqrt)
            })
            .collect()
    }
}

pub fn rotate_env(env: &EnvLight, angle: f64) -> Result<EnvLight> {
    if !angle.is_finite() {
        return Err(Error::invalid("rotation angle must be finite"));
    }
    Ok(env.rotated(angle))
}

/// Checked radiance lookup; `direction` must be unit length within 1e-6.
pub fn eval_env(env: &EnvLight, direction: [f64; 3]) -> Result<[f64; 3]> {
    let n = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !n.is_finite() || n == 0.0 {
        return Err(Error::invalid("direction must be non-zero and finite"));
    }
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("direction is not unit length (|d| = {n})")));
    }
    Ok(env.eval_clamped(direction))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::sh::tests::{closed_form, random_dir};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn random_env(degree: usize, seed: u64) -> EnvLight {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (0..sh::coeff_count(degree))
            .map(|_| [0, 1, 2].map(|_| rng.random_range(-1.0..1.0)))
            .collect();
        EnvLight::new(degree, coeffs).unwrap()
    }

    /// Gauss-Legendre nodes and weights on [-1, 1].
    fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
                let mut dp = 0.0;
                for _ in 0..100 {
                    let (mut p0, mut p1) = (1.0, x);
                    for k in 2..=n {
                        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                    let dx = p1 / dp;
                    x -= dx;
                    if dx.abs() < 1e-16 {
                        break;
                    }
                }
                (x, 2.0 / ((1.0 - x * x) * dp * dp))
            })
            .collect()
    }

    #[test]
    fn zero_rotation_keeps_coefficients() {
        let env = random_env(4, 1);
        assert_eq!(rotate_env(&env, 0.0).unwrap(), env);
    }

    #[test]
    fn zonal_light_is_rotation_invariant() {
        let mut coeffs = vec![[0.0; 3]; 25];
        for l in 0..=4 {
            coeffs[l * l + l] = [l as f64 + 0.5, 1.0, -0.25 * l as f64];
        }
        let env = EnvLight::new(4, coeffs).unwrap();
        for theta in [0.3, 1.0, 2.5, -4.0] {
            let r = env.rotated(theta);
            for (a, b) in r.coeffs().iter().zip(env.coeffs()) {
                for k in 0..3 {
                    assert!((a[k] - b[k]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn rotation_matches_numerical_reprojection() {
        // Rotated radiance sampled on a 100 x 100 product grid (Gauss-Legendre
        // in z, uniform in azimuth) and projected back onto the basis.
        let env = random_env(4, 2);
        let theta = 0.7;
        let rotated = env.rotated(theta);
        let nodes = gauss_legendre(100);
        let n_phi = 100;
        let mut proj = vec![[0.0; 3]; 25];
        for &(z, wz) in &nodes {
            let r = (1.0 - z * z).sqrt();
            for j in 0..n_phi {
                let phi = 2.0 * PI * j as f64 / n_phi as f64;
                let d = [r * phi.cos(), r * phi.sin(), z];
                let (s, c) = theta.sin_cos();
                let src = [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]];
                let radiance = env.eval_raw(src);
                let b = sh::basis(4, d);
                let w = wz * 2.0 * PI / n_phi as f64;
                for i in 0..25 {
                    for k in 0..3 {
                        proj[i][k] += w * radiance[k] * b[i];
                    }
                }
            }
        }
        let mut err = 0.0f64;
        let mut norm = 0.0f64;
        for (p, q) in proj.iter().zip(rotated.coeffs()) {
            for k in 0..3 {
                err += (p[k] - q[k]).powi(2);
                norm += q[k] * q[k];
            }
        }
        assert!((err / norm).sqrt() < 1e-4, "rel err {}", (err / norm).sqrt());
    }

    #[test]
    fn rotation_preserves_band_norms() {
        let env = random_env(4, 5);
        for theta in [0.1, 1.3, 3.0, 10.0] {
            let a = env.band_norms();
            let b = env.rotated(theta).band_norms();
            for (x, y) in a.iter().zip(&b) {
                for k in 0..3 {
                    assert!((x[k] - y[k]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn dc_only_light_is_constant() {
        let env = EnvLight::new(0, vec![[2.0, 1.0, 0.5]]).unwrap();
        let y00 = 0.5 / PI.sqrt();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let c = eval_env(&env, random_dir(&mut rng)).unwrap();
            assert!((c[0] - 2.0 * y00).abs() < 1e-15);
            assert!((c[2] - 0.5 * y00).abs() < 1e-15);
        }
    }

    #[test]
    fn z_aligned_band_one_peaks_at_up() {
        let mut coeffs = vec![[0.0; 3]; 4];
        coeffs[2] = [1.0; 3];
        let env = EnvLight::new(1, coeffs).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let top = env.eval_raw([0.0, 0.0, 1.0])[0];
        let bottom = env.eval_raw([0.0, 0.0, -1.0])[0];
        for _ in 0..100 {
            let v = env.eval_raw(random_dir(&mut rng))[0];
            assert!(v <= top && v >= bottom);
        }
        // clamped lookup floors the negative lobe
        assert_eq!(eval_env(&env, [0.0, 0.0, -1.0]).unwrap(), [0.0; 3]);
    }

    #[test]
    fn eval_matches_direct_basis_sum() {
        let env = random_env(3, 4);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for _ in 0..64 {
            let d = random_dir(&mut rng);
            let b = closed_form(d);
            let mut want = [0.0; 3];
            for i in 0..16 {
                for k in 0..3 {
                    want[k] += b[i] * env.coeffs()[i][k];
                }
            }
            let got = env.eval_raw(d);
            for k in 0..3 {
                assert!((got[k] - want[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_directions() {
        let env = EnvLight::studio();
        assert!(eval_env(&env, [0.0; 3]).is_err());
        assert!(eval_env(&env, [0.0, 0.0, 2.0]).is_err());
    }

    #[test]
    fn irradiance_of_constant_light_is_pi_times_radiance() {
        let env = EnvLight::constant([0.3, 0.2, 0.1]);
        let e = env.irradiance([0.0, 1.0, 0.0]);
        assert!((e[0] - 0.3 * PI).abs() < 1e-12);
    }

    #[test]
    fn smoothing_to_infinity_keeps_dc_only() {
        let env = EnvLight::studio().smoothed(f64::INFINITY);
        assert!(env.coeffs()[1..].iter().flatten().all(|&c| c == 0.0));
        assert_eq!(env.coeffs()[0], EnvLight::studio().coeffs()[0]);
    }
}
