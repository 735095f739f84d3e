use rand::Rng;
use rand_distr::{Distribution, Normal, UnitBall};

use crate::reference::SyntheticScene;
use crate::scene::{logit, Gaussian, GaussianCloud, LATENT_DIM};
use crate::{Error, Result};

pub const INIT_OPACITY: f64 = 0.1;
pub const LATENT_STD: f64 = 0.1;
/// Jitter standard deviation as a fraction of the scene diameter.
pub const JITTER: f64 = 0.01;

/// Where initial positions come from.
#[derive(Clone, Copy, Debug)]
pub enum InitSource<'a> {
    /// Area-weighted samples on the scene's surfaces.
    Surface(&'a SyntheticScene),
    /// Uniform samples inside an origin-centered ball.
    RandomBall { radius: f64 },
}

/// Mean over points of the distance to the nearest other point. Sweeps
/// along x after sorting, pruning candidates once the x gap alone exceeds
/// the best distance so far.
pub fn mean_nearest_neighbor(points: &[[f64; 3]]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]).then(a.cmp(&b)));
    let d2 = |a: &[f64; 3], b: &[f64; 3]| (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>();
    let mut total = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        let p = &points[i];
        let mut best = f64::INFINITY;
        for &j in &order[rank + 1..] {
            let dx = points[j][0] - p[0];
            if dx * dx >= best {
                break;
            }
            best = best.min(d2(p, &points[j]));
        }
        for &j in order[..rank].iter().rev() {
            let dx = p[0] - points[j][0];
            if dx * dx >= best {
                break;
            }
            best = best.min(d2(p, &points[j]));
        }
        total += best.sqrt();
    }
    total / points.len() as f64
}

/// Initial cloud of `count` isotropic Gaussians with random latents.
pub fn init_cloud(source: InitSource, count: usize, rng: &mut impl Rng) -> Result<GaussianCloud> {
    if count == 0 {
        return Err(Error::invalid("initial Gaussian count must be at least 1"));
    }
    let (positions, diameter) = match source {
        InitSource::Surface(scene) => {
            scene.validate()?;
            if scene.spheres.is_empty() && scene.ground.is_none() {
                return Err(Error::invalid("scene has no surfaces to sample"));
            }
            let r = scene.bounding_radius();
            let d = 2.0 * r;
            let jitter = Normal::new(0.0, JITTER * d).expect("positive std");
            let limit = 1.02 * r;
            let pts = (0..count)
                .map(|_| {
                    let (p, _) = scene.sample_surface(rng);
                    let mut q = [0, 1, 2].map(|k| p[k] + jitter.sample(rng));
                    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
                    if n > limit {
                        q = q.map(|v| v * limit / n);
                    }
                    q
                })
                .collect::<Vec<_>>();
            (pts, d)
        }
        InitSource::RandomBall { radius } => {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(Error::invalid("init radius must be positive"));
            }
            let pts = (0..count)
                .map(|_| {
                    let u: [f64; 3] = UnitBall.sample(rng);
                    u.map(|v| v * radius)
                })
                .collect::<Vec<_>>();
            (pts, 2.0 * radius)
        }
    };
    let nn = mean_nearest_neighbor(&positions);
    let scale = if nn > 0.0 { nn } else { 0.05 * diameter };
    let latent_dist = Normal::new(0.0, LATENT_STD).expect("positive std");
    let gaussians = positions
        .into_iter()
        .map(|p| {
            let mut g = Gaussian::isotropic(p, scale, INIT_OPACITY);
            g.opacity_logit = logit(INIT_OPACITY);
            let mut latent = [0.0; LATENT_DIM];
            for v in &mut latent {
                *v = latent_dist.sample(rng);
            }
            g.latent = latent;
            g
        })
        .collect();
    GaussianCloud::new(gaussians, diameter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn single_gaussian() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let c = init_cloud(InitSource::Surface(&SyntheticScene::tabletop()), 1, &mut rng).unwrap();
        assert_eq!(c.len(), 1);
        assert!(c.gaussians[0].is_finite());
        assert!(c.gaussians[0].scale()[0] > 0.0);
    }

    #[test]
    fn positions_inside_bound() {
        let scene = SyntheticScene::tabletop();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let c = init_cloud(InitSource::Surface(&scene), 3000, &mut rng).unwrap();
        let r = scene.bounding_radius() * 1.02;
        for g in &c.gaussians {
            let n = g.position().norm();
            assert!(n <= r + 1e-12);
            assert!((g.opacity() - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_matches_brute_force() {
        let scene = SyntheticScene::tabletop();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let c = init_cloud(InitSource::Surface(&scene), 100, &mut rng).unwrap();
        let pts: Vec<[f64; 3]> = c.gaussians.iter().map(|g| g.position).collect();
        let mut total = 0.0;
        for i in 0..pts.len() {
            let mut best = f64::INFINITY;
            for j in 0..pts.len() {
                if i != j {
                    let d = ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2) + (pts[i][2] - pts[j][2]).powi(2)).sqrt();
                    best = best.min(d);
                }
            }
            total += best;
        }
        let want = total / pts.len() as f64;
        assert!((c.gaussians[0].scale()[0] - want).abs() < 1e-12 * want.max(1.0));
    }

    #[test]
    fn random_ball_mode() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let c = init_cloud(InitSource::RandomBall { radius: 2.0 }, 50, &mut rng).unwrap();
        assert!(c.gaussians.iter().all(|g| g.position().norm() <= 2.0));
    }

    #[test]
    fn zero_count_rejected() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        assert!(init_cloud(InitSource::RandomBall { radius: 1.0 }, 0, &mut rng).is_err());
    }
}
