use crate::scene::{sh, CameraPose, GaussianCloud};
use crate::{Error, Result};

use super::view_directions;

pub const DEFAULT_SH_DEGREE: usize = 3;

/// Per-Gaussian SH color coefficients, `coeff_count(degree)` RGB triples per
/// Gaussian, stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct ShColors {
    pub degree: usize,
    pub coeffs: Vec<[f64; 3]>,
}

impl ShColors {
    pub fn new(degree: usize, coeffs: Vec<[f64; 3]>) -> Result<Self> {
        if degree > 4 {
            return Err(Error::invalid(format!("SH degree {degree} exceeds 4")));
        }
        if !coeffs.len().is_multiple_of(sh::coeff_count(degree)) {
            return Err(Error::SizeMismatch(format!(
                "{} coefficients is not a multiple of {}",
                coeffs.len(),
                sh::coeff_count(degree)
            )));
        }
        if !coeffs.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::invalid("SH coefficients must be finite"));
        }
        Ok(ShColors { degree, coeffs })
    }

    /// Uniform gray `rgb` for every Gaussian, higher bands zero.
    pub fn constant(count: usize, degree: usize, rgb: [f64; 3]) -> Self {
        let nb = sh::coeff_count(degree);
        let y00 = sh::basis(0, [0.0, 0.0, 1.0])[0];
        let mut coeffs = vec![[0.0; 3]; count * nb];
        for g in 0..count {
            coeffs[g * nb] = rgb.map(|c| c / y00);
        }
        ShColors { degree, coeffs }
    }

    pub fn per_gaussian(&self) -> usize {
        sh::coeff_count(self.degree)
    }

    pub fn len(&self) -> usize {
        self.coeffs.len() / self.per_gaussian()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn gaussian(&self, i: usize) -> &[[f64; 3]] {
        let nb = self.per_gaussian();
        &self.coeffs[i * nb..(i + 1) * nb]
    }

    /// Drop Gaussians whose `keep` flag is false.
    pub fn retain(&mut self, keep: &[bool]) {
        let nb = self.per_gaussian();
        let mut out = Vec::with_capacity(self.coeffs.len());
        for (i, &k) in keep.iter().enumerate() {
            if k {
                out.extend_from_slice(&self.coeffs[i * nb..(i + 1) * nb]);
            }
        }
        self.coeffs = out;
    }

    /// Unclamped color of Gaussian `i` along unit direction `d`.
    pub fn eval_raw(&self, i: usize, d: [f64; 3]) -> [f64; 3] {
        let y = sh::basis(self.degree, d);
        let mut c = [0.0; 3];
        for (k, coef) in self.gaussian(i).iter().enumerate() {
            for ch in 0..3 {
                c[ch] += coef[ch] * y[k];
            }
        }
        c
    }
}

/// Baseline colors: SH dot product along each Gaussian's view direction,
/// clamped to `[0, 1]`. No dependence on light rotation.
pub fn eval_sh_colors(cloud: &GaussianCloud, sh: &ShColors, cam: &CameraPose) -> Result<Vec<[f64; 3]>> {
    if sh.len() != cloud.len() {
        return Err(Error::SizeMismatch(format!("{} SH sets for {} Gaussians", sh.len(), cloud.len())));
    }
    let views = view_directions(cloud, cam)?;
    Ok(views
        .iter()
        .enumerate()
        .map(|(i, (v, _))| sh.eval_raw(i, *v).map(|c| c.clamp(0.0, 1.0)))
        .collect())
}

/// Reverse pass of [`eval_sh_colors`]: gradients for the coefficients and
/// for the Gaussian positions (through the view direction).
pub fn sh_colors_backward(
    cloud: &GaussianCloud,
    sh: &ShColors,
    cam: &CameraPose,
    grad_colors: &[[f64; 3]],
) -> Result<(Vec<[f64; 3]>, Vec<[f64; 3]>)> {
    let views = view_directions(cloud, cam)?;
    let nb = sh.per_gaussian();
    let per: Vec<(Vec<[f64; 3]>, [f64; 3])> = crate::par::map_range(cloud.len(), |i| {
        let (v, dist) = views[i];
        let mut y = vec![0.0; nb];
        let mut dy = vec![[0.0; 3]; nb];
        sh::basis_grad_into(sh.degree, v, &mut y, &mut dy);
        let coefs = sh.gaussian(i);
        let mut raw = [0.0; 3];
        for k in 0..nb {
            for ch in 0..3 {
                raw[ch] += coefs[k][ch] * y[k];
            }
        }
        // Clamp passes gradient only strictly inside the interval.
        let g = [0, 1, 2].map(|ch| if raw[ch] > 0.0 && raw[ch] < 1.0 { grad_colors[i][ch] } else { 0.0 });
        let gc: Vec<[f64; 3]> = y.iter().map(|&yk| g.map(|gc| gc * yk)).collect();
        let mut gv = [0.0; 3];
        for k in 0..nb {
            let s: f64 = (0..3).map(|ch| g[ch] * coefs[k][ch]).sum();
            for a in 0..3 {
                gv[a] += s * dy[k][a];
            }
        }
        (gc, super::view_grad_to_position(v, dist, gv))
    });
    let mut gcoef = Vec::with_capacity(sh.coeffs.len());
    let mut gpos = Vec::with_capacity(cloud.len());
    for (gc, gp) in per {
        gcoef.extend(gc);
        gpos.push(gp);
    }
    Ok((gcoef, gpos))
}
