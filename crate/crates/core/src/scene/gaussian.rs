use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use crate::{Error, Result};

/// Width of the per-Gaussian appearance latent.
pub const LATENT_DIM: usize = 8;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// One anisotropic 3D Gaussian primitive.
///
/// `rotation` is stored as `[w, x, y, z]`. The optimizer moves it freely; all
/// geometry uses the normalized quaternion.
#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian {
    pub position: [f64; 3],
    pub log_scale: [f64; 3],
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    pub latent: [f64; LATENT_DIM],
}

impl Gaussian {
    pub fn isotropic(position: [f64; 3], scale: f64, opacity: f64) -> Self {
        Gaussian {
            position,
            log_scale: [scale.ln(); 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: logit(opacity),
            latent: [0.0; LATENT_DIM],
        }
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn scale(&self) -> [f64; 3] {
        self.log_scale.map(f64::exp)
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }

    pub fn unit_rotation(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.rotation;
        UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z))
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.unit_rotation().to_rotation_matrix().into_inner()
    }

    /// World-space covariance `R diag(s^2) R^T`.
    pub fn covariance(&self) -> Matrix3<f64> {
        let r = self.rotation_matrix();
        let s2 = Matrix3::from_diagonal(&Vector3::from(self.log_scale.map(|l| (2.0 * l).exp())));
        r * s2 * r.transpose()
    }

    pub fn is_finite(&self) -> bool {
        self.position
            .iter()
            .chain(&self.log_scale)
            .chain(&self.rotation)
            .chain(&self.latent)
            .chain(std::iter::once(&self.opacity_logit))
            .all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianCloud {
    pub gaussians: Vec<Gaussian>,
    pub scene_diameter: f64,
}

impl GaussianCloud {
    pub fn new(gaussians: Vec<Gaussian>, scene_diameter: f64) -> Result<Self> {
        if !(scene_diameter.is_finite() && scene_diameter > 0.0) {
            return Err(Error::invalid("scene diameter must be positive"));
        }
        Ok(GaussianCloud {
            gaussians,
            scene_diameter,
        })
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// Re-normalize quaternions and cap scales at the scene diameter.
    pub fn normalize(&mut self) {
        let cap = self.scene_diameter.ln();
        for g in &mut self.gaussians {
            let n = g.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                g.rotation = g.rotation.map(|v| v / n);
            } else {
                g.rotation = [1.0, 0.0, 0.0, 0.0];
            }
            for s in &mut g.log_scale {
                *s = s.min(cap);
            }
        }
    }
}
