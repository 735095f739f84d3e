//! Per-Gaussian radiance: the rotation-conditioned neural decoder and the
//! SH-color baseline.

pub mod encoding;
pub mod mlp;
pub mod sh_colors;

pub use encoding::{encode_inputs, INPUT_DIM};
pub use mlp::{mlp_backward, mlp_forward, MlpActivations, MlpParams, HIDDEN};
pub use sh_colors::{eval_sh_colors, sh_colors_backward, ShColors, DEFAULT_SH_DEGREE};

use crate::scene::{CameraPose, GaussianCloud, LATENT_DIM};
use crate::{Error, Result};

/// Unit direction from the camera center to each Gaussian, with the distance.
pub fn view_directions(cloud: &GaussianCloud, cam: &CameraPose) -> Result<Vec<([f64; 3], f64)>> {
    let c = cam.center();
    cloud
        .gaussians
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let d = [g.position[0] - c.x, g.position[1] - c.y, g.position[2] - c.z];
            let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if !(n > 1e-12) {
                return Err(Error::invalid(format!("Gaussian {i} coincides with the camera center")));
            }
            Ok((d.map(|v| v / n), n))
        })
        .collect()
}

/// Chain a gradient on the normalized view direction back to the position.
pub(crate) fn view_grad_to_position(v: [f64; 3], dist: f64, gv: [f64; 3]) -> [f64; 3] {
    let dot = v[0] * gv[0] + v[1] * gv[1] + v[2] * gv[2];
    [0, 1, 2].map(|k| (gv[k] - v[k] * dot) / dist)
}

/// State kept between the conditional forward and backward passes.
pub struct ConditionalCache {
    views: Vec<([f64; 3], f64)>,
    act: MlpActivations,
}

pub struct ConditionalGrads {
    pub mlp: Vec<f64>,
    pub latent: Vec<[f64; LATENT_DIM]>,
    pub position: Vec<[f64; 3]>,
}

pub fn conditional_forward(
    cloud: &GaussianCloud,
    params: &MlpParams,
    cam: &CameraPose,
    theta: f64,
) -> Result<(Vec<[f64; 3]>, ConditionalCache)> {
    if !theta.is_finite() {
        return Err(Error::invalid("light rotation must be finite"));
    }
    let views = view_directions(cloud, cam)?;
    let mut input = vec![0.0; cloud.len() * INPUT_DIM];
    for ((g, (v, _)), row) in cloud.gaussians.iter().zip(&views).zip(input.chunks_exact_mut(INPUT_DIM)) {
        encoding::encode_into(&g.latent, *v, theta, row);
    }
    let act = params.forward_batch(input);
    let colors = act.output.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok((colors, ConditionalCache { views, act }))
}

pub fn conditional_backward(params: &MlpParams, cache: &ConditionalCache, grad_colors: &[[f64; 3]]) -> ConditionalGrads {
    let flat: Vec<f64> = grad_colors.iter().flatten().copied().collect();
    let (mlp, gx) = params.backward_batch(&cache.act, &flat);
    let mut latent = Vec::with_capacity(cache.views.len());
    let mut position = Vec::with_capacity(cache.views.len());
    for ((v, dist), row) in cache.views.iter().zip(gx.chunks_exact(INPUT_DIM)) {
        let mut l = [0.0; LATENT_DIM];
        l.copy_from_slice(&row[..LATENT_DIM]);
        latent.push(l);
        position.push(view_grad_to_position(*v, *dist, encoding::view_grad(*v, row)));
    }
    ConditionalGrads { mlp, latent, position }
}

/// Rotation-conditioned colors for every Gaussian as seen from `cam` under
/// light rotation `theta`.
pub fn eval_cloud_colors(cloud: &GaussianCloud, params: &MlpParams, cam: &CameraPose, theta: f64) -> Result<Vec<[f64; 3]>> {
    Ok(conditional_forward(cloud, params, cam, theta)?.0)
}
