use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};

use super::{CUTOFF_Q, DILATION, NEAR_PLANE};
use crate::scene::{CameraPose, Gaussian};

/// Rotation matrix of the normalized quaternion `[w, x, y, z]`.
pub fn quaternion_rotation(q: [f64; 4]) -> Matrix3<f64> {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// A projected Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct Splat2D {
    pub mean: [f64; 2],
    /// Symmetric covariance `[xx, xy, yy]`, pixels², dilation included.
    pub cov2d: [f64; 3],
    /// Inverse covariance `[xx, xy, yy]`.
    pub conic: [f64; 3],
    pub depth: f64,
    pub gaussian_index: usize,
    pub opacity: f64,
    /// Pixel radius enclosing the evaluated region.
    pub extent: f64,
    // Intermediates reused by the backward pass.
    pub(crate) cam_point: Vector3<f64>,
    pub(crate) jw: Matrix2x3<f64>,
    pub(crate) cov3d: Matrix3<f64>,
    pub(crate) rot: Matrix3<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Projection {
    Visible(Box<Splat2D>),
    Culled,
}

impl Projection {
    pub fn visible(self) -> Option<Splat2D> {
        match self {
            Projection::Visible(s) => Some(*s),
            Projection::Culled => None,
        }
    }
}

pub(crate) fn project_indexed(g: &Gaussian, index: usize, cam: &CameraPose, w_rot: &Matrix3<f64>) -> Projection {
    let t = cam.to_camera(&g.position());
    if !(t.z > NEAR_PLANE) {
        return Projection::Culled;
    }
    let f = cam.focal;
    let (iz, iz2) = (1.0 / t.z, 1.0 / (t.z * t.z));
    let j = Matrix2x3::new(f * iz, 0.0, -f * t.x * iz2, 0.0, f * iz, -f * t.y * iz2);
    let rot = quaternion_rotation(g.rotation);
    let s2 = Matrix3::from_diagonal(&Vector3::from(g.log_scale.map(|l| (2.0 * l).exp())));
    let cov3d = rot * s2 * rot.transpose();
    let jw = j * w_rot;
    let cov: Matrix2<f64> = jw * cov3d * jw.transpose() + Matrix2::identity() * DILATION;
    let (a, b, c) = (cov[(0, 0)], 0.5 * (cov[(0, 1)] + cov[(1, 0)]), cov[(1, 1)]);
    let det = a * c - b * b;
    if !(det > 0.0) || !det.is_finite() {
        return Projection::Culled;
    }
    let mean = [
        f * t.x * iz + cam.principal_point[0],
        f * t.y * iz + cam.principal_point[1],
    ];
    let half = 0.5 * (a + c);
    let lambda_max = half + (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let sigma = lambda_max.sqrt();
    let (w, h) = (cam.width as f64, cam.height as f64);
    if mean[0] < -3.0 * sigma
        || mean[0] > w + 3.0 * sigma
        || mean[1] < -3.0 * sigma
        || mean[1] > h + 3.0 * sigma
    {
        return Projection::Culled;
    }
    Projection::Visible(Box::new(Splat2D {
        mean,
        cov2d: [a, b, c],
        conic: [c / det, -b / det, a / det],
        depth: t.z,
        gaussian_index: index,
        opacity: g.opacity(),
        extent: (CUTOFF_Q * lambda_max).sqrt(),
        cam_point: t,
        jw,
        cov3d,
        rot,
    }))
}

/// Project one Gaussian into `cam`.
pub fn project_gaussian(g: &Gaussian, cam: &CameraPose) -> Projection {
    project_indexed(g, 0, cam, &cam.rotation())
}
