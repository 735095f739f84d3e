//! Fitting a Gaussian cloud and its radiance model to a dataset.

pub mod adam;
pub mod init;
pub mod loss;
pub mod metrics;

pub use adam::AdamState;
pub use init::{init_cloud, mean_nearest_neighbor, InitSource};
pub use loss::{loss, ssim};
pub use metrics::{masked_psnr, psnr, PSNR_CAP};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::radiance::{
    conditional_backward, conditional_forward, eval_cloud_colors, eval_sh_colors, sh_colors_backward, MlpParams,
    ShColors, DEFAULT_SH_DEGREE, HIDDEN,
};
use crate::raster::{render_splats, Prepared};
use crate::reference::Dataset;
use crate::scene::{sh, CameraPose, GaussianCloud, ImageBuffer, LATENT_DIM};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Colors from the shared decoder, conditioned on view and light rotation.
    Conditional,
    /// Per-Gaussian SH colors that ignore the light rotation.
    ShBaseline,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearningRates {
    /// Multiplied by the scene diameter.
    pub position: f64,
    pub log_scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub latent: f64,
    pub mlp: f64,
    pub sh_dc: f64,
    pub sh_rest: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            position: 1.6e-4,
            log_scale: 5e-3,
            rotation: 1e-3,
            opacity: 5e-2,
            latent: 2.5e-3,
            mlp: 1e-3,
            sh_dc: 2.5e-3,
            sh_rest: 1.25e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Initial number of Gaussians.
    pub gaussians: usize,
    pub lr: LearningRates,
    /// Final position learning rate as a fraction of the initial one.
    pub position_lr_final: f64,
    pub lambda_ssim: f64,
    pub prune_every: usize,
    pub prune_threshold: f64,
    pub seed: u64,
    pub hidden: usize,
    pub sh_degree: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 5000,
            gaussians: 2000,
            lr: LearningRates::default(),
            position_lr_final: 0.01,
            lambda_ssim: 0.2,
            prune_every: 500,
            prune_threshold: 0.005,
            seed: 0,
            hidden: HIDDEN,
            sh_degree: DEFAULT_SH_DEGREE,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if self.gaussians == 0 {
            return Err(Error::invalid("need at least one Gaussian"));
        }
        if !(0.0..=1.0).contains(&self.lambda_ssim) {
            return Err(Error::invalid("loss mix must lie in [0, 1]"));
        }
        if self.sh_degree > 4 || self.hidden == 0 {
            return Err(Error::invalid("SH degree must be <= 4 and hidden width positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Radiance {
    Conditional(MlpParams),
    Sh(ShColors),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogEntry {
    pub iteration: usize,
    pub loss: f64,
    pub gaussians: usize,
}

/// Training log as CSV: `iteration,loss,gaussians`, losses in shortest
/// round-trip form.
pub fn log_csv(log: &[LogEntry]) -> String {
    let mut s = String::from("iteration,loss,gaussians\n");
    for e in log {
        s.push_str(&format!("{},{:?},{}\n", e.iteration, e.loss, e.gaussians));
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub cloud: GaussianCloud,
    pub radiance: Radiance,
    pub background: [f64; 3],
    /// Distinct light rotations seen in training, wrapped to `[0, 2π)` and
    /// sorted.
    pub trained_thetas: Vec<f64>,
    pub log: Vec<LogEntry>,
}

/// Distinct angles wrapped to `[0, 2π)`, sorted, merged within 1e-9.
pub fn distinct_angles(angles: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut w: Vec<f64> = angles
        .into_iter()
        .map(|a| {
            let r = a.rem_euclid(std::f64::consts::TAU);
            if r >= std::f64::consts::TAU { 0.0 } else { r }
        })
        .collect();
    w.sort_by(|a, b| a.total_cmp(b));
    w.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    w
}

impl TrainedModel {
    pub fn mode(&self) -> Mode {
        match self.radiance {
            Radiance::Conditional(_) => Mode::Conditional,
            Radiance::Sh(_) => Mode::ShBaseline,
        }
    }

    /// Per-Gaussian colors for `cam`; the baseline ignores `theta`.
    pub fn colors(&self, cam: &CameraPose, theta: f64) -> Result<Vec<[f64; 3]>> {
        match &self.radiance {
            Radiance::Conditional(p) => eval_cloud_colors(&self.cloud, p, cam, theta),
            Radiance::Sh(s) => eval_sh_colors(&self.cloud, s, cam),
        }
    }

    pub fn render(&self, cam: &CameraPose, theta: f64) -> Result<ImageBuffer> {
        let colors = self.colors(cam, theta)?;
        Ok(render_splats(&self.cloud, &colors, cam, self.background)?.image)
    }

    pub fn is_finite(&self) -> bool {
        self.cloud.gaussians.iter().all(|g| g.is_finite())
            && match &self.radiance {
                Radiance::Conditional(p) => p.is_finite(),
                Radiance::Sh(s) => s.coeffs.iter().flatten().all(|v| v.is_finite()),
            }
    }
}

struct Optimizer {
    position: AdamState,
    log_scale: AdamState,
    rotation: AdamState,
    opacity: AdamState,
    latent: AdamState,
    radiance: AdamState,
}

impl Optimizer {
    fn new(n: usize, radiance_len: usize, radiance_stride: usize) -> Self {
        Optimizer {
            position: AdamState::new(n * 3, 3),
            log_scale: AdamState::new(n * 3, 3),
            rotation: AdamState::new(n * 4, 4),
            opacity: AdamState::new(n, 1),
            latent: AdamState::new(n * LATENT_DIM, LATENT_DIM),
            radiance: AdamState::new(radiance_len, radiance_stride),
        }
    }

    fn retain(&mut self, keep: &[bool], per_gaussian_radiance: bool) {
        for st in [&mut self.position, &mut self.log_scale, &mut self.rotation, &mut self.opacity, &mut self.latent] {
            st.retain(keep);
        }
        if per_gaussian_radiance {
            self.radiance.retain(keep);
        }
    }
}

fn step_field<const K: usize>(
    cloud: &mut GaussianCloud,
    state: &mut AdamState,
    grads: &[[f64; K]],
    lr: f64,
    t: u64,
    field: impl Fn(&mut crate::scene::Gaussian) -> &mut [f64; K],
) {
    let mut params: Vec<f64> = cloud.gaussians.iter_mut().flat_map(|g| *field(g)).collect();
    let flat: Vec<f64> = grads.iter().flatten().copied().collect();
    state.step(&mut params, &flat, lr, t);
    for (g, chunk) in cloud.gaussians.iter_mut().zip(params.chunks_exact(K)) {
        field(g).copy_from_slice(chunk);
    }
}

/// Fit a cloud plus radiance model to `dataset`. Iteration `i` logs the loss
/// before its update; the last iteration only logs, so `iterations = 1`
/// returns the initialization.
pub fn train(dataset: &Dataset, init: InitSource, config: &TrainConfig, mode: Mode) -> Result<TrainedModel> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cloud = init_cloud(init, config.gaussians, &mut rng)?;
    let n0 = cloud.len();
    let nb = sh::coeff_count(config.sh_degree);
    let mut radiance = match mode {
        Mode::Conditional => Radiance::Conditional(MlpParams::init(config.hidden, &mut rng)),
        Mode::ShBaseline => Radiance::Sh(ShColors::constant(n0, config.sh_degree, [0.5; 3])),
    };
    let mut opt = match &radiance {
        Radiance::Conditional(p) => Optimizer::new(n0, p.data.len(), p.data.len()),
        Radiance::Sh(s) => Optimizer::new(n0, s.coeffs.len() * 3, nb * 3),
    };
    let bg = dataset.background;
    let mut order: Vec<usize> = Vec::new();
    let mut log = Vec::with_capacity(config.iterations);
    let pos_lr0 = config.lr.position * cloud.scene_diameter;
    let last = config.iterations - 1;

    for it in 0..config.iterations {
        if order.is_empty() {
            order = (0..dataset.len()).collect();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let entry = &dataset.entries[order.pop().expect("refilled above")];
        let cam = &entry.frame.object_frame_pose;
        let theta = entry.frame.light_rotation;

        let (colors, cond_cache) = match &radiance {
            Radiance::Conditional(p) => {
                let (c, cache) = conditional_forward(&cloud, p, cam, theta)?;
                (c, Some(cache))
            }
            Radiance::Sh(s) => (eval_sh_colors(&cloud, s, cam)?, None),
        };
        let prepared = Prepared::new(&cloud, cam);
        let fwd = prepared.forward(&colors, bg)?;
        let (value, grad_img) = loss::loss(&fwd.output.image, &entry.image, config.lambda_ssim)?;
        if !value.is_finite() {
            return Err(Error::Divergence(format!("loss is {value} at iteration {it}")));
        }
        log.push(LogEntry {
            iteration: it,
            loss: value,
            gaussians: cloud.len(),
        });
        if it == last {
            break;
        }

        let rg = prepared.backward(&cloud, cam, &colors, bg, &fwd, &grad_img)?;
        let mut pos_grad = rg.position.clone();
        let t = it as u64 + 1;
        match &mut radiance {
            Radiance::Conditional(p) => {
                let g = conditional_backward(p, cond_cache.as_ref().expect("conditional cache"), &rg.color);
                for (a, b) in pos_grad.iter_mut().zip(&g.position) {
                    for k in 0..3 {
                        a[k] += b[k];
                    }
                }
                step_field(&mut cloud, &mut opt.latent, &g.latent, config.lr.latent, t, |g| &mut g.latent);
                opt.radiance.step(&mut p.data, &g.mlp, config.lr.mlp, t);
            }
            Radiance::Sh(s) => {
                let (gc, gp) = sh_colors_backward(&cloud, s, cam, &rg.color)?;
                for (a, b) in pos_grad.iter_mut().zip(&gp) {
                    for k in 0..3 {
                        a[k] += b[k];
                    }
                }
                let mut flat: Vec<f64> = s.coeffs.iter().flatten().copied().collect();
                let grads: Vec<f64> = gc.iter().flatten().copied().collect();
                // DC and higher bands use different rates; step them as two
                // interleaved views of one state so pruning stays row-wise.
                let (mut dc_p, mut dc_g, mut rest_p, mut rest_g) = (vec![], vec![], vec![], vec![]);
                let (mut dc_idx, mut rest_idx) = (vec![], vec![]);
                for i in 0..flat.len() {
                    if (i / 3) % nb == 0 {
                        dc_p.push(flat[i]);
                        dc_g.push(grads[i]);
                        dc_idx.push(i);
                    } else {
                        rest_p.push(flat[i]);
                        rest_g.push(grads[i]);
                        rest_idx.push(i);
                    }
                }
                let mut dc_state = AdamState {
                    stride: 1,
                    m: dc_idx.iter().map(|&i| opt.radiance.m[i]).collect(),
                    v: dc_idx.iter().map(|&i| opt.radiance.v[i]).collect(),
                };
                let mut rest_state = AdamState {
                    stride: 1,
                    m: rest_idx.iter().map(|&i| opt.radiance.m[i]).collect(),
                    v: rest_idx.iter().map(|&i| opt.radiance.v[i]).collect(),
                };
                dc_state.step(&mut dc_p, &dc_g, config.lr.sh_dc, t);
                rest_state.step(&mut rest_p, &rest_g, config.lr.sh_rest, t);
                for (k, &i) in dc_idx.iter().enumerate() {
                    flat[i] = dc_p[k];
                    opt.radiance.m[i] = dc_state.m[k];
                    opt.radiance.v[i] = dc_state.v[k];
                }
                for (k, &i) in rest_idx.iter().enumerate() {
                    flat[i] = rest_p[k];
                    opt.radiance.m[i] = rest_state.m[k];
                    opt.radiance.v[i] = rest_state.v[k];
                }
                for (c, chunk) in s.coeffs.iter_mut().zip(flat.chunks_exact(3)) {
                    c.copy_from_slice(chunk);
                }
            }
        }
        let frac = if last > 0 { it as f64 / last as f64 } else { 0.0 };
        let pos_lr = pos_lr0 * config.position_lr_final.powf(frac);
        step_field(&mut cloud, &mut opt.position, &pos_grad, pos_lr, t, |g| &mut g.position);
        step_field(&mut cloud, &mut opt.log_scale, &rg.log_scale, config.lr.log_scale, t, |g| &mut g.log_scale);
        step_field(&mut cloud, &mut opt.rotation, &rg.rotation, config.lr.rotation, t, |g| &mut g.rotation);
        let op: Vec<[f64; 1]> = rg.opacity_logit.iter().map(|&v| [v]).collect();
        step_field(&mut cloud, &mut opt.opacity, &op, config.lr.opacity, t, |g| {
            std::array::from_mut(&mut g.opacity_logit)
        });
        let cap = cloud.scene_diameter.ln();
        for g in &mut cloud.gaussians {
            for s in &mut g.log_scale {
                *s = s.min(cap);
            }
        }
        if !cloud.gaussians.iter().all(|g| g.is_finite()) {
            return Err(Error::Divergence(format!("non-finite Gaussian after iteration {it}")));
        }

        if config.prune_every > 0 && (it + 1) % config.prune_every == 0 {
            let keep: Vec<bool> = cloud.gaussians.iter().map(|g| g.opacity() >= config.prune_threshold).collect();
            if keep.iter().any(|k| !k) {
                let mut i = 0;
                cloud.gaussians.retain(|_| {
                    i += 1;
                    keep[i - 1]
                });
                let per_gaussian = matches!(radiance, Radiance::Sh(_));
                if let Radiance::Sh(s) = &mut radiance {
                    s.retain(&keep);
                }
                opt.retain(&keep, per_gaussian);
            }
        }
    }

    Ok(TrainedModel {
        cloud,
        radiance,
        background: bg,
        trained_thetas: distinct_angles(dataset.thetas()),
        log,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub index: usize,
    pub camera_index: usize,
    pub theta: f64,
    pub psnr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub mean_psnr: f64,
    pub rows: Vec<EvalRow>,
}

impl Evaluation {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,camera_index,theta,psnr\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r.index, r.camera_index, r.theta, r.psnr));
        }
        s
    }
}

/// Masked PSNR of the model against each test entry, rendered at the
/// entry's light rotation (ignored by the baseline).
pub fn evaluate(model: &TrainedModel, test: &Dataset) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let rows = test
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let img = model.render(&e.frame.object_frame_pose, e.frame.light_rotation)?;
            Ok(EvalRow {
                index: i,
                camera_index: e.frame.camera_index,
                theta: e.frame.light_rotation,
                psnr: masked_psnr(&img, &e.image, &e.mask)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_psnr = rows.iter().map(|r| r.psnr).sum::<f64>() / rows.len() as f64;
    Ok(Evaluation { mean_psnr, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{generate_schedule, CameraRig, PlannerConfig, Sampling, Strategy};
    use crate::reference::{generate_dataset, SyntheticScene};
    use crate::scene::EnvLight;

    fn small_dataset(frames: usize, res: u32) -> (SyntheticScene, Dataset) {
        let scene = SyntheticScene::tabletop();
        let cfg = PlannerConfig::new(1, 1.0, 0.0, Sampling::Frames(frames));
        let sched = generate_schedule(&cfg, Strategy::Static, &CameraRig::default()).unwrap();
        let ds = generate_dataset(&scene, &sched, &EnvLight::studio(), (res, res)).unwrap();
        (scene, ds)
    }

    #[test]
    fn single_iteration_returns_initialization() {
        let (scene, ds) = small_dataset(1, 16);
        let cfg = TrainConfig {
            iterations: 1,
            gaussians: 50,
            ..TrainConfig::default()
        };
        let m = train(&ds, InitSource::Surface(&scene), &cfg, Mode::Conditional).unwrap();
        assert_eq!(m.log.len(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let c = init_cloud(InitSource::Surface(&scene), 50, &mut rng).unwrap();
        assert_eq!(m.cloud, c);
    }

    #[test]
    fn identical_seeds_identical_runs() {
        let (scene, ds) = small_dataset(1, 16);
        let cfg = TrainConfig {
            iterations: 30,
            gaussians: 80,
            prune_every: 10,
            ..TrainConfig::default()
        };
        for mode in [Mode::Conditional, Mode::ShBaseline] {
            let a = train(&ds, InitSource::Surface(&scene), &cfg, mode).unwrap();
            let b = train(&ds, InitSource::Surface(&scene), &cfg, mode).unwrap();
            assert_eq!(a, b);
            assert!(a.log.windows(2).all(|w| w[0].iteration < w[1].iteration));
        }
    }

    #[test]
    fn overfits_a_single_image() {
        let (scene, ds) = small_dataset(1, 32);
        let cfg = TrainConfig {
            iterations: 500,
            gaussians: 200,
            ..TrainConfig::default()
        };
        let m = train(&ds, InitSource::Surface(&scene), &cfg, Mode::Conditional).unwrap();
        let img = m.render(&ds.entries[0].frame.object_frame_pose, 0.0).unwrap();
        let l1 = img.data.iter().zip(&ds.entries[0].image.data).map(|(a, b)| (a - b).abs()).sum::<f64>()
            / img.data.len() as f64;
        assert!(l1 < 0.02, "L1 {l1}");
    }

    #[test]
    fn evaluate_on_training_image() {
        let (scene, ds) = small_dataset(1, 32);
        let cfg = TrainConfig {
            iterations: 1500,
            gaussians: 200,
            ..TrainConfig::default()
        };
        let m = train(&ds, InitSource::Surface(&scene), &cfg, Mode::Conditional).unwrap();
        let ev = evaluate(&m, &ds).unwrap();
        assert_eq!(ev.rows.len(), 1);
        assert!(ev.mean_psnr > 30.0, "PSNR {}", ev.mean_psnr);
    }

    #[test]
    fn pruning_keeps_opaque_gaussians() {
        let (scene, ds) = small_dataset(1, 16);
        let cfg = TrainConfig {
            iterations: 41,
            gaussians: 100,
            prune_every: 20,
            prune_threshold: 0.09,
            ..TrainConfig::default()
        };
        let m = train(&ds, InitSource::Surface(&scene), &cfg, Mode::ShBaseline).unwrap();
        assert!(m.cloud.gaussians.iter().all(|g| g.opacity() >= 0.09));
        assert!(m.log.windows(2).all(|w| w[1].gaussians <= w[0].gaussians));
        if let Radiance::Sh(s) = &m.radiance {
            assert_eq!(s.len(), m.cloud.len());
        }
    }

    #[test]
    fn constant_model_scores_cap() {
        let (scene, ds) = small_dataset(1, 8);
        let mut gt = ds.clone();
        gt.entries[0].image = ImageBuffer::filled(8, 8, [0.5; 3]);
        let mut m = train(
            &ds,
            InitSource::Surface(&scene),
            &TrainConfig {
                iterations: 1,
                gaussians: 1,
                ..TrainConfig::default()
            },
            Mode::Conditional,
        )
        .unwrap();
        m.cloud.gaussians.clear();
        m.background = [0.5; 3];
        assert_eq!(evaluate(&m, &gt).unwrap().mean_psnr, PSNR_CAP);
    }
}
