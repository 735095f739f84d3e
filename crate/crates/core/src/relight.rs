//! Freezing the light rotation into per-Gaussian SH colors, and mixing
//! several light rotations with RGB weights.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use crate::radiance::{encoding, eval_cloud_colors, eval_sh_colors, MlpParams, ShColors, INPUT_DIM};
use crate::raster::render_splats;
use crate::scene::{sh, CameraPose, GaussianCloud, ImageBuffer};
use crate::train::{distinct_angles, Radiance, TrainedModel};
use crate::{par, Error, Result};

/// Sample directions per Gaussian for the least-squares fit.
pub const DISTILL_DIRECTIONS: usize = 128;

#[derive(Clone, Debug, PartialEq)]
pub struct Distilled {
    pub theta: f64,
    pub sh: ShColors,
    /// Root-mean-square fit error per Gaussian over directions and channels.
    pub residuals: Vec<f64>,
}

/// Least-squares SH fit of `f(direction)` for each Gaussian against a fixed
/// direction set. `targets[g * K + k]` is the color of Gaussian `g` along
/// `dirs[k]`.
pub fn fit_sh(dirs: &[[f64; 3]], targets: &[[f64; 3]], degree: usize) -> Result<(ShColors, Vec<f64>)> {
    if degree > 4 {
        return Err(Error::invalid(format!("SH degree {degree} exceeds 4")));
    }
    let k = dirs.len();
    let nb = sh::coeff_count(degree);
    if k < nb {
        return Err(Error::Singular(format!("{k} directions cannot determine {nb} coefficients")));
    }
    if k == 0 || !targets.len().is_multiple_of(k) {
        return Err(Error::SizeMismatch("targets are not a whole number of direction sets".into()));
    }
    let y = DMatrix::from_fn(k, nb, |r, c| sh::basis(degree, dirs[r])[c]);
    let chol = (y.transpose() * &y)
        .cholesky()
        .ok_or_else(|| Error::Singular("normal matrix is not positive definite".into()))?;
    let yt = y.transpose();
    let count = targets.len() / k;
    let per = par::map_range(count, |g| {
        let t = &targets[g * k..(g + 1) * k];
        let mut coefs = vec![[0.0; 3]; nb];
        let mut se = 0.0;
        for ch in 0..3 {
            let rhs = &yt * DVector::from_iterator(k, t.iter().map(|c| c[ch]));
            let b = chol.solve(&rhs);
            let fit = &y * &b;
            for r in 0..k {
                se += (fit[r] - t[r][ch]).powi(2);
            }
            for c in 0..nb {
                coefs[c][ch] = b[c];
            }
        }
        (coefs, (se / (3 * k) as f64).sqrt())
    });
    let mut coeffs = Vec::with_capacity(count * nb);
    let mut residuals = Vec::with_capacity(count);
    for (c, r) in per {
        coeffs.extend(c);
        residuals.push(r);
    }
    Ok((ShColors::new(degree, coeffs)?, residuals))
}

/// Decoder output for every Gaussian along every direction at rotation
/// `theta`, laid out `[gaussian][direction]`.
fn sample_decoder(cloud: &GaussianCloud, params: &MlpParams, dirs: &[[f64; 3]], theta: f64) -> Vec<[f64; 3]> {
    let k = dirs.len();
    let mut input = vec![0.0; cloud.len() * k * INPUT_DIM];
    for (g, block) in cloud.gaussians.iter().zip(input.chunks_exact_mut(k * INPUT_DIM)) {
        for (d, row) in dirs.iter().zip(block.chunks_exact_mut(INPUT_DIM)) {
            encoding::encode_into(&g.latent, *d, theta, row);
        }
    }
    let act = params.forward_batch(input);
    act.output.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

/// Fix the light rotation at `theta` and fit per-Gaussian SH colors of
/// `degree` to the decoder over a Fibonacci set of view directions.
pub fn distill_sh(model: &TrainedModel, theta: f64, degree: usize) -> Result<Distilled> {
    distill_sh_with(model, theta, degree, DISTILL_DIRECTIONS)
}

pub fn distill_sh_with(model: &TrainedModel, theta: f64, degree: usize, directions: usize) -> Result<Distilled> {
    let Radiance::Conditional(params) = &model.radiance else {
        return Err(Error::invalid("distillation needs a rotation-conditioned model"));
    };
    if !theta.is_finite() {
        return Err(Error::invalid("distillation angle must be finite"));
    }
    if degree > 4 {
        return Err(Error::invalid(format!("SH degree {degree} exceeds 4")));
    }
    if directions < sh::coeff_count(degree) {
        return Err(Error::Singular(format!(
            "{directions} directions cannot determine {} coefficients",
            sh::coeff_count(degree)
        )));
    }
    let dirs = sh::fibonacci_sphere(directions);
    let targets = sample_decoder(&model.cloud, params, &dirs, theta);
    if model.cloud.is_empty() {
        return Ok(Distilled {
            theta,
            sh: ShColors::new(degree, vec![])?,
            residuals: vec![],
        });
    }
    let (sh, residuals) = fit_sh(&dirs, &targets, degree)?;
    Ok(Distilled { theta, sh, residuals })
}

/// Render with fixed SH colors only; the decoder is not involved.
pub fn render_distilled(cloud: &GaussianCloud, sh: &ShColors, cam: &CameraPose, background: [f64; 3]) -> Result<ImageBuffer> {
    let colors = eval_sh_colors(cloud, sh, cam)?;
    Ok(render_splats(cloud, &colors, cam, background)?.image)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CombinationTerm {
    pub theta: f64,
    pub weight: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct CombinationSpec {
    pub terms: Vec<CombinationTerm>,
}

impl CombinationSpec {
    pub fn new(terms: Vec<CombinationTerm>) -> Result<Self> {
        let s = CombinationSpec { terms };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::invalid("a combination needs at least one term"));
        }
        for t in &self.terms {
            if !t.theta.is_finite() || !t.weight.iter().all(|w| w.is_finite()) {
                return Err(Error::invalid("combination angles and weights must be finite"));
            }
        }
        Ok(())
    }

    /// Parse `theta:r,g,b;theta:r,g,b`; angles accept a `pi` suffix.
    pub fn parse(text: &str) -> Result<Self> {
        let terms = text
            .split(';')
            .filter(|s| !s.trim().is_empty())
            .map(|term| {
                let (a, w) = term
                    .split_once(':')
                    .ok_or_else(|| Error::invalid(format!("term '{term}' is not theta:r,g,b")))?;
                let theta = parse_angle(a)?;
                let ws: Vec<f64> = w
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad weight '{v}'"))))
                    .collect::<Result<_>>()?;
                let weight: [f64; 3] = match ws.as_slice() {
                    [g] => [*g; 3],
                    [r, g, b] => [*r, *g, *b],
                    _ => return Err(Error::invalid(format!("weight '{w}' needs 1 or 3 values"))),
                };
                Ok(CombinationTerm { theta, weight })
            })
            .collect::<Result<Vec<_>>>()?;
        CombinationSpec::new(terms)
    }
}

/// Radians from `"0.25"`, `"pi"`, `"0.2pi"`, `"-1.5pi"` or `"inf"`.
pub fn parse_angle(text: &str) -> Result<f64> {
    let t = text.trim().to_ascii_lowercase();
    let bad = || Error::invalid(format!("cannot parse angle '{text}'"));
    if let Some(head) = t.strip_suffix("pi").or_else(|| t.strip_suffix('π')) {
        let k = match head.trim() {
            "" | "+" => 1.0,
            "-" => -1.0,
            h => h.trim_end_matches('*').parse::<f64>().map_err(|_| bad())?,
        };
        return Ok(k * std::f64::consts::PI);
    }
    t.parse::<f64>().map_err(|_| bad())
}

/// Arc of light rotations covered by training. Angles are wrapped to
/// `[0, 2π)`; the arc is the complement of the largest gap, or the whole
/// circle when no gap exceeds 1.5 times the mean spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaRange {
    /// `None` means the full circle.
    pub arc: Option<(f64, f64)>,
}

impl ThetaRange {
    pub fn from_angles(thetas: &[f64]) -> Self {
        let w = distinct_angles(thetas.iter().copied());
        if w.len() <= 1 {
            let a = w.first().copied().unwrap_or(0.0);
            return ThetaRange { arc: Some((a, a)) };
        }
        let mut gap = w[0] + TAU - w[w.len() - 1];
        let mut start = w[0];
        let mut end = w[w.len() - 1];
        for pair in w.windows(2) {
            let g = pair[1] - pair[0];
            if g > gap {
                gap = g;
                start = pair[1];
                end = pair[0];
            }
        }
        if gap <= 1.5 * TAU / w.len() as f64 {
            ThetaRange { arc: None }
        } else {
            ThetaRange { arc: Some((start, end)) }
        }
    }

    pub fn contains(&self, theta: f64) -> bool {
        const TOL: f64 = 1e-6;
        let Some((start, end)) = self.arc else {
            return true;
        };
        let len = (end - start).rem_euclid(TAU);
        let off = (theta - start).rem_euclid(TAU);
        off <= len + TOL || off >= TAU - TOL
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Combined {
    pub image: ImageBuffer,
    /// One message per term whose angle lies outside the trained range.
    pub warnings: Vec<String>,
}

/// Per-Gaussian colors `max(0, Σ w_k ⊙ decoder(θ_k))`.
pub fn combined_colors(model: &TrainedModel, spec: &CombinationSpec, cam: &CameraPose) -> Result<Vec<[f64; 3]>> {
    spec.validate()?;
    let Radiance::Conditional(params) = &model.radiance else {
        return Err(Error::invalid("combination needs a rotation-conditioned model"));
    };
    let mut acc = vec![[0.0; 3]; model.cloud.len()];
    for t in &spec.terms {
        let c = eval_cloud_colors(&model.cloud, params, cam, t.theta)?;
        for (a, c) in acc.iter_mut().zip(&c) {
            for k in 0..3 {
                a[k] += t.weight[k] * c[k];
            }
        }
    }
    Ok(acc.into_iter().map(|c| c.map(|v| v.max(0.0))).collect())
}

/// Composite the weighted mix of several light rotations in one pass.
pub fn combine_rotations(model: &TrainedModel, spec: &CombinationSpec, cam: &CameraPose) -> Result<Combined> {
    let colors = combined_colors(model, spec, cam)?;
    let image = render_splats(&model.cloud, &colors, cam, model.background)?.image;
    let range = ThetaRange::from_angles(&model.trained_thetas);
    let warnings = spec
        .terms
        .iter()
        .filter(|t| !range.contains(t.theta))
        .map(|t| format!("extrapolation: theta {} lies outside the trained rotation range", t.theta))
        .collect();
    Ok(Combined { image, warnings })
}
