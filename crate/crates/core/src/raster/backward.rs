use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};

use super::forward::{splat_alpha, ForwardState, Prepared};
use super::ALPHA_CAP;
use crate::par;
use crate::scene::{CameraPose, GaussianCloud};
use crate::{Error, Result};

/// Per-Gaussian gradients of a scalar loss through the rasterizer.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderGrads {
    pub position: Vec<[f64; 3]>,
    pub log_scale: Vec<[f64; 3]>,
    /// With respect to the raw (unnormalized) quaternion.
    pub rotation: Vec<[f64; 4]>,
    pub opacity_logit: Vec<f64>,
    pub color: Vec<[f64; 3]>,
}

impl RenderGrads {
    pub fn zeros(n: usize) -> Self {
        RenderGrads {
            position: vec![[0.0; 3]; n],
            log_scale: vec![[0.0; 3]; n],
            rotation: vec![[0.0; 4]; n],
            opacity_logit: vec![0.0; n],
            color: vec![[0.0; 3]; n],
        }
    }

    pub fn all_finite(&self) -> bool {
        self.position.iter().flatten().all(|v| v.is_finite())
            && self.log_scale.iter().flatten().all(|v| v.is_finite())
            && self.rotation.iter().flatten().all(|v| v.is_finite())
            && self.opacity_logit.iter().all(|v| v.is_finite())
            && self.color.iter().flatten().all(|v| v.is_finite())
    }
}

/// Gradients of one splat's 2D parameters.
#[derive(Clone, Copy, Default)]
struct SplatGrad {
    mean: [f64; 2],
    /// d/d conic entries `[xx, xy, yy]`, xy counted once.
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
}

impl SplatGrad {
    fn add(&mut self, o: &SplatGrad) {
        for k in 0..2 {
            self.mean[k] += o.mean[k];
        }
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        self.opacity += o.opacity;
    }
}

/// d R / d q_k for the unit quaternion `[w, x, y, z]`.
fn rotation_jacobian(q: [f64; 4]) -> [Matrix3<f64>; 4] {
    let [w, x, y, z] = q;
    [
        Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0) * 2.0,
        Matrix3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x) * 2.0,
        Matrix3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y) * 2.0,
        Matrix3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0) * 2.0,
    ]
}

impl Prepared {
    /// Reverse pass for a forward pass computed with the same inputs.
    pub fn backward(
        &self,
        cloud: &GaussianCloud,
        cam: &CameraPose,
        colors: &[[f64; 3]],
        background: [f64; 3],
        fwd: &ForwardState,
        grad_output: &[f64],
    ) -> Result<RenderGrads> {
        let npx = self.width * self.height;
        if grad_output.len() != npx * 3 {
            return Err(Error::SizeMismatch(format!(
                "grad_output has {} values, image has {}",
                grad_output.len(),
                npx * 3
            )));
        }
        if colors.len() != cloud.len() || cloud.len() != self.gaussian_count {
            return Err(Error::SizeMismatch("colors/cloud length mismatch".into()));
        }
        let n_tiles = self.tiles_x * self.tiles_y;
        // Per-tile partial sums aligned with the tile lists.
        let partials = par::map_range(n_tiles, |tile| {
            let list = &self.tile_lists[tile];
            let mut acc = vec![SplatGrad::default(); list.len()];
            for (x, y) in self.tile_pixels(tile) {
                let i = y * self.width + x;
                let g = [grad_output[i * 3], grad_output[i * 3 + 1], grad_output[i * 3 + 2]];
                if g == [0.0; 3] {
                    continue;
                }
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let mut t = fwd.output.transmittance[i];
                // color composited behind the current splat, including background
                let mut behind = [0, 1, 2].map(|k| t * background[k]);
                for pos in (0..fwd.stop[i] as usize).rev() {
                    let s = &self.splats[list[pos] as usize];
                    let Some((alpha, gauss, dx, dy)) = splat_alpha(s, px, py) else {
                        continue;
                    };
                    let col = colors[s.gaussian_index];
                    t /= 1.0 - alpha;
                    let w = alpha * t;
                    let a = &mut acc[pos];
                    let mut d_alpha = 0.0;
                    for k in 0..3 {
                        a.color[k] += g[k] * w;
                        d_alpha += g[k] * (col[k] * t - behind[k] / (1.0 - alpha));
                        behind[k] += col[k] * w;
                    }
                    if s.opacity * gauss >= ALPHA_CAP {
                        continue;
                    }
                    a.opacity += d_alpha * gauss;
                    let d_q = -0.5 * gauss * s.opacity * d_alpha;
                    let c = &s.conic;
                    // q = c0 dx^2 + 2 c1 dx dy + c2 dy^2 with d = p - mean
                    a.mean[0] += d_q * -2.0 * (c[0] * dx + c[1] * dy);
                    a.mean[1] += d_q * -2.0 * (c[1] * dx + c[2] * dy);
                    a.conic[0] += d_q * dx * dx;
                    a.conic[1] += d_q * 2.0 * dx * dy;
                    a.conic[2] += d_q * dy * dy;
                }
            }
            acc
        });
        let mut splat_grads = vec![SplatGrad::default(); self.splats.len()];
        for (tile, acc) in partials.iter().enumerate() {
            for (pos, &k) in self.tile_lists[tile].iter().enumerate() {
                splat_grads[k as usize].add(&acc[pos]);
            }
        }

        let mut out = RenderGrads::zeros(cloud.len());
        let w_rot = cam.rotation();
        let per_splat = par::map_range(self.splats.len(), |k| {
            let s = &self.splats[k];
            let sg = &splat_grads[k];
            let g = &cloud.gaussians[s.gaussian_index];
            geometry_backward(s, sg, g.rotation, g.log_scale, &w_rot, cam.focal)
        });
        for (k, (pos, ls, rot)) in per_splat.into_iter().enumerate() {
            let s = &self.splats[k];
            let idx = s.gaussian_index;
            let sg = &splat_grads[k];
            out.position[idx] = pos;
            out.log_scale[idx] = ls;
            out.rotation[idx] = rot;
            out.opacity_logit[idx] = sg.opacity * s.opacity * (1.0 - s.opacity);
            out.color[idx] = sg.color;
        }
        Ok(out)
    }
}

fn geometry_backward(
    s: &super::Splat2D,
    sg: &SplatGrad,
    raw_q: [f64; 4],
    log_scale: [f64; 3],
    w_rot: &Matrix3<f64>,
    f: f64,
) -> ([f64; 3], [f64; 3], [f64; 4]) {
    // conic -> covariance: dL/dSigma = -A G_A A with G_A the symmetric
    // full-matrix gradient.
    let conic = Matrix2::new(s.conic[0], s.conic[1], s.conic[1], s.conic[2]);
    let g_conic = Matrix2::new(sg.conic[0], 0.5 * sg.conic[1], 0.5 * sg.conic[1], sg.conic[2]);
    let g_cov = -(conic * g_conic * conic);

    // cov = M Sigma3 M^T + dilation, M = J W
    let m = &s.jw;
    let g_cov3 = m.transpose() * g_cov * m;
    let g_m: Matrix2x3<f64> = 2.0 * g_cov * m * s.cov3d;
    let g_j = g_m * w_rot.transpose();

    let t = s.cam_point;
    let (iz, iz2, iz3) = (1.0 / t.z, 1.0 / (t.z * t.z), 1.0 / (t.z * t.z * t.z));
    let mut g_t = Vector3::zeros();
    // Jacobian entries J00 = f/z, J02 = -f x/z^2, J11 = f/z, J12 = -f y/z^2
    g_t.x += g_j[(0, 2)] * (-f * iz2);
    g_t.y += g_j[(1, 2)] * (-f * iz2);
    g_t.z += (g_j[(0, 0)] + g_j[(1, 1)]) * (-f * iz2)
        + g_j[(0, 2)] * (2.0 * f * t.x * iz3)
        + g_j[(1, 2)] * (2.0 * f * t.y * iz3);
    // projected mean u = f x/z + cx, v = f y/z + cy
    g_t.x += sg.mean[0] * f * iz;
    g_t.y += sg.mean[1] * f * iz;
    g_t.z += -(sg.mean[0] * f * t.x + sg.mean[1] * f * t.y) * iz2;
    let g_pos = w_rot.transpose() * g_t;

    // Sigma3 = R D R^T, D = diag(exp(2 log_scale))
    let d = Vector3::from(log_scale.map(|l| (2.0 * l).exp()));
    let r = &s.rot;
    let rgr = r.transpose() * g_cov3 * r;
    let g_ls = [0, 1, 2].map(|k| rgr[(k, k)] * 2.0 * d[k]);
    let g_r = 2.0 * g_cov3 * r * Matrix3::from_diagonal(&d);

    let norm = raw_q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let qn = raw_q.map(|v| v / norm);
    let dr = rotation_jacobian(qn);
    let g_qn = [0, 1, 2, 3].map(|k| g_r.component_mul(&dr[k]).sum());
    let dot: f64 = (0..4).map(|k| g_qn[k] * qn[k]).sum();
    let g_q = [0, 1, 2, 3].map(|k| (g_qn[k] - qn[k] * dot) / norm);

    (g_pos.into(), g_ls, g_q)
}

/// Gradients of `sum(grad_output * render_splats(...))` with respect to every
/// Gaussian parameter and color.
pub fn render_backward(
    cloud: &GaussianCloud,
    colors: &[[f64; 3]],
    cam: &CameraPose,
    background: [f64; 3],
    grad_output: &[f64],
) -> Result<RenderGrads> {
    let prepared = Prepared::new(cloud, cam);
    let fwd = prepared.forward(colors, background)?;
    prepared.backward(cloud, cam, colors, background, &fwd, grad_output)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::raster::render_splats;
    use crate::scene::Gaussian;
    use rand::{Rng, SeedableRng};

    pub(crate) fn random_scene(n: usize, seed: u64) -> (GaussianCloud, Vec<[f64; 3]>, CameraPose) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cam = CameraPose::look_at(
            Vector3::new(0.3, -3.0, 0.8),
            Vector3::zeros(),
            Vector3::z(),
            8,
            8,
            9.0,
        )
        .unwrap();
        let gaussians = (0..n)
            .map(|_| {
                let mut g = Gaussian::isotropic(
                    [0, 1, 2].map(|_| rng.random_range(-0.6..0.6)),
                    1.0,
                    0.5,
                );
                g.log_scale = [0, 1, 2].map(|_| rng.random_range(-1.6f64..-0.7));
                g.rotation = [0, 1, 2, 3].map(|_| rng.random_range(-1.0..1.0));
                g.opacity_logit = rng.random_range(-2.0..0.5);
                g
            })
            .collect();
        let colors = (0..n)
            .map(|_| [0, 1, 2].map(|_| rng.random_range(0.0..1.0)))
            .collect();
        (GaussianCloud::new(gaussians, 2.0).unwrap(), colors, cam)
    }

    fn weighted_sum(cloud: &GaussianCloud, colors: &[[f64; 3]], cam: &CameraPose, bg: [f64; 3], w: &[f64]) -> f64 {
        let img = render_splats(cloud, colors, cam, bg).unwrap().image;
        img.data.iter().zip(w).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let (cloud, colors, cam) = random_scene(6, 1);
        let g = render_backward(&cloud, &colors, &cam, [0.1; 3], &vec![0.0; 8 * 8 * 3]).unwrap();
        assert_eq!(g, RenderGrads::zeros(6));
    }

    #[test]
    fn color_grad_is_alpha_times_transmittance() {
        let g = Gaussian::isotropic([0.0, 0.0, 2.0], 0.3, 0.6);
        let cam = CameraPose::new(8, 8, 10.0, [4.0, 4.0], nalgebra::Isometry3::identity()).unwrap();
        let cloud = GaussianCloud::new(vec![g.clone()], 1.0).unwrap();
        let mut up = vec![0.0; 8 * 8 * 3];
        up[(5 * 8 + 3) * 3 + 1] = 1.0;
        let grads = render_backward(&cloud, &[[0.5; 3]], &cam, [0.0; 3], &up).unwrap();
        let s = crate::raster::project_gaussian(&g, &cam).visible().unwrap();
        let (alpha, ..) = splat_alpha(&s, 3.5, 5.5).unwrap();
        assert!((grads.color[0][1] - alpha).abs() < 1e-14);
        assert_eq!(grads.color[0][0], 0.0);
    }

    #[test]
    fn matches_finite_differences() {
        let (cloud, colors, cam) = random_scene(10, 5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let up: Vec<f64> = (0..8 * 8 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bg = [0.2, 0.4, 0.1];
        let grads = render_backward(&cloud, &colors, &cam, bg, &up).unwrap();
        let h = 1e-4;
        let mut checked = 0;
        for i in 0..cloud.len() {
            for p in 0..17 {
                let fd = {
                    let eval = |delta: f64| {
                        let mut c2 = cloud.clone();
                        let mut col2 = colors.clone();
                        let g = &mut c2.gaussians[i];
                        match p {
                            0..=2 => g.position[p] += delta,
                            3..=5 => g.log_scale[p - 3] += delta,
                            6..=9 => g.rotation[p - 6] += delta,
                            10 => g.opacity_logit += delta,
                            11..=13 => col2[i][p - 11] += delta,
                            _ => return 0.0,
                        }
                        weighted_sum(&c2, &col2, &cam, bg, &up)
                    };
                    (eval(h) - eval(-h)) / (2.0 * h)
                };
                let an = match p {
                    0..=2 => grads.position[i][p],
                    3..=5 => grads.log_scale[i][p - 3],
                    6..=9 => grads.rotation[i][p - 6],
                    10 => grads.opacity_logit[i],
                    11..=13 => grads.color[i][p - 11],
                    _ => continue,
                };
                let err = (fd - an).abs();
                assert!(
                    err < 1e-6 || err < 1e-3 * fd.abs().max(an.abs()),
                    "gaussian {i} param {p}: fd {fd} analytic {an}"
                );
                checked += 1;
            }
        }
        assert_eq!(checked, 140);
    }

    #[test]
    fn compositing_weights_partition_unity() {
        let (cloud, _, cam) = random_scene(30, 8);
        let prepared = Prepared::new(&cloud, &cam);
        // With all colors one and a black background, the pixel value is the
        // sum of compositing weights.
        let ones = vec![[1.0; 3]; cloud.len()];
        let fwd = prepared.forward(&ones, [0.0; 3]).unwrap();
        for (i, t) in fwd.output.transmittance.iter().enumerate() {
            let sum = fwd.output.image.data[i * 3];
            assert!((sum + t - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn output_is_linear_in_colors_over_black() {
        let (cloud, c1, cam) = random_scene(12, 3);
        let (_, c2, _) = random_scene(12, 4);
        let (a, b) = (0.7, -1.3);
        let mix: Vec<[f64; 3]> = c1
            .iter()
            .zip(&c2)
            .map(|(x, y)| [0, 1, 2].map(|k| a * x[k] + b * y[k]))
            .collect();
        let r1 = render_splats(&cloud, &c1, &cam, [0.0; 3]).unwrap().image;
        let r2 = render_splats(&cloud, &c2, &cam, [0.0; 3]).unwrap().image;
        let rm = render_splats(&cloud, &mix, &cam, [0.0; 3]).unwrap().image;
        for i in 0..rm.data.len() {
            assert!((rm.data[i] - (a * r1.data[i] + b * r2.data[i])).abs() < 1e-12);
        }
    }
}
