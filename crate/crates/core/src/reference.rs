//! Analytic ground-truth renderer standing in for the physical capture.
//!
//! Spheres (and an optional ground disk) lit by a distant SH environment:
//! Lambertian irradiance via the clamped-cosine SH convolution plus a single
//! glossy lobe sampled at the mirror direction. Direct light only, no shadows.

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::par;
use crate::scene::{AlphaMask, CameraPose, CaptureSchedule, EnvLight, ImageBuffer, ScheduleEntry};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
    pub albedo: [f64; 3],
    pub gloss_strength: f64,
    pub gloss_exponent: f64,
}

/// Horizontal disk centered on the turntable axis.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundDisk {
    pub height: f64,
    pub radius: f64,
    pub albedo: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub spheres: Vec<Sphere>,
    pub ground: Option<GroundDisk>,
    pub background: [f64; 3],
}

impl SyntheticScene {
    /// Five spheres of different albedo and gloss, deliberately asymmetric
    /// about the turntable axis.
    pub fn tabletop() -> Self {
        let s = |c: [f64; 3], r: f64, a: [f64; 3], gs: f64, ge: f64| Sphere {
            center: c,
            radius: r,
            albedo: a,
            gloss_strength: gs,
            gloss_exponent: ge,
        };
        SyntheticScene {
            spheres: vec![
                s([0.0, 0.0, 0.0], 0.75, [0.80, 0.32, 0.22], 0.04, 6.0),
                s([0.85, 0.45, -0.3], 0.42, [0.22, 0.55, 0.80], 0.08, 16.0),
                s([-0.55, 0.75, -0.35], 0.38, [0.85, 0.78, 0.25], 0.0, 1.0),
                s([-0.3, -0.85, -0.4], 0.33, [0.45, 0.80, 0.35], 0.03, 4.0),
                s([0.15, 0.1, 0.9], 0.28, [0.85, 0.85, 0.88], 0.06, 12.0),
            ],
            ground: None,
            background: [0.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.spheres {
            let vals = s
                .center
                .iter()
                .chain(&s.albedo)
                .chain([&s.radius, &s.gloss_strength, &s.gloss_exponent]);
            if vals.clone().any(|v| !v.is_finite()) {
                return Err(Error::invalid("scene parameters must be finite"));
            }
            if s.radius <= 0.0 {
                return Err(Error::invalid("sphere radius must be positive"));
            }
            if s.gloss_exponent < 1.0 || !(0.0..=1.0).contains(&s.gloss_strength) {
                return Err(Error::invalid("gloss strength in [0,1] and exponent >= 1 required"));
            }
        }
        if let Some(g) = &self.ground {
            if !(g.radius > 0.0 && g.height.is_finite()) {
                return Err(Error::invalid("ground disk needs a positive radius"));
            }
        }
        Ok(())
    }

    /// Radius of the smallest origin-centered sphere holding the scene.
    pub fn bounding_radius(&self) -> f64 {
        let spheres = self
            .spheres
            .iter()
            .map(|s| Vector3::from(s.center).norm() + s.radius);
        let ground = self
            .ground
            .iter()
            .map(|g| (g.radius * g.radius + g.height * g.height).sqrt());
        spheres.chain(ground).fold(0.0, f64::max)
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.bounding_radius()
    }

    /// Stable content hash.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        let mut put = |v: f64| h.update(v.to_le_bytes());
        for s in &self.spheres {
            s.center.iter().for_each(|&v| put(v));
            put(s.radius);
            s.albedo.iter().for_each(|&v| put(v));
            put(s.gloss_strength);
            put(s.gloss_exponent);
        }
        if let Some(g) = &self.ground {
            put(g.height);
            put(g.radius);
            g.albedo.iter().for_each(|&v| put(v));
        }
        self.background.iter().for_each(|&v| put(v));
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Copy of the scene spun by `angle` about world z through the origin.
    pub fn rotated(&self, angle: f64) -> Self {
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle);
        SyntheticScene {
            spheres: self
                .spheres
                .iter()
                .map(|s| Sphere {
                    center: (q * Vector3::from(s.center)).into(),
                    ..s.clone()
                })
                .collect(),
            ..self.clone()
        }
    }

    /// Uniform sample on the union of surfaces (area weighted), returning the
    /// point and its outward normal.
    pub fn sample_surface(&self, rng: &mut impl Rng) -> ([f64; 3], [f64; 3]) {
        let sphere_area = |s: &Sphere| 4.0 * std::f64::consts::PI * s.radius * s.radius;
        let ground_area = self
            .ground
            .as_ref()
            .map_or(0.0, |g| std::f64::consts::PI * g.radius * g.radius);
        let total: f64 = self.spheres.iter().map(sphere_area).sum::<f64>() + ground_area;
        let mut pick = rng.random_range(0.0..total);
        for s in &self.spheres {
            let a = sphere_area(s);
            if pick < a {
                let z: f64 = rng.random_range(-1.0..1.0);
                let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let r = (1.0 - z * z).sqrt();
                let n = [r * phi.cos(), r * phi.sin(), z];
                let p = [0, 1, 2].map(|k| s.center[k] + s.radius * n[k]);
                return (p, n);
            }
            pick -= a;
        }
        let g = self.ground.as_ref().expect("sample fell on ground");
        let r = g.radius * rng.random_range(0.0f64..1.0).sqrt();
        let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        ([r * phi.cos(), r * phi.sin(), g.height], [0.0, 0.0, 1.0])
    }
}

struct Hit {
    normal: Vector3<f64>,
    albedo: [f64; 3],
    gloss_strength: f64,
    gloss_exponent: f64,
}

fn intersect(scene: &SyntheticScene, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
    let mut best: Option<(f64, Hit)> = None;
    for s in &scene.spheres {
        let c = Vector3::from(s.center);
        let oc = origin - c;
        let b = oc.dot(dir);
        let disc = b * b - (oc.norm_squared() - s.radius * s.radius);
        if disc < 0.0 {
            continue;
        }
        let sq = disc.sqrt();
        let t = if -b - sq > 1e-9 { -b - sq } else { -b + sq };
        if t <= 1e-9 || best.as_ref().is_some_and(|(bt, _)| *bt <= t) {
            continue;
        }
        let point = origin + t * dir;
        best = Some((
            t,
            Hit {
                normal: (point - c) / s.radius,
                albedo: s.albedo,
                gloss_strength: s.gloss_strength,
                gloss_exponent: s.gloss_exponent,
            },
        ));
    }
    if let Some(g) = &scene.ground {
        if dir.z.abs() > 1e-12 {
            let t = (g.height - origin.z) / dir.z;
            let point = origin + t * dir;
            if t > 1e-9
                && point.x * point.x + point.y * point.y <= g.radius * g.radius
                && best.as_ref().is_none_or(|(bt, _)| t < *bt)
            {
                let normal = if origin.z >= g.height { Vector3::z() } else { -Vector3::z() };
                best = Some((
                    t,
                    Hit {
                        normal,
                        albedo: g.albedo,
                        gloss_strength: 0.0,
                        gloss_exponent: 1.0,
                    },
                ));
            }
        }
    }
    best.map(|(_, h)| h)
}

fn shade(hit: &Hit, to_eye: &Vector3<f64>, env: &EnvLight) -> [f64; 3] {
    let n = hit.normal;
    let e = env.irradiance(n.into());
    let mut rgb = [0, 1, 2].map(|k| hit.albedo[k] / std::f64::consts::PI * e[k]);
    if hit.gloss_strength > 0.0 {
        let ndv = n.dot(to_eye).clamp(-1.0, 1.0);
        let mirror = (2.0 * ndv * n - to_eye).normalize();
        let w = hit.gloss_strength * ((1.0 + ndv) / 2.0).powf(hit.gloss_exponent);
        let l = env.eval_clamped(mirror.into());
        for k in 0..3 {
            rgb[k] += w * l[k];
        }
    }
    rgb
}

fn render_with_env(scene: &SyntheticScene, cam: &CameraPose, env: &EnvLight) -> (ImageBuffer, AlphaMask) {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let origin = cam.center();
    let rows = par::map_range(h, |y| {
        let mut rgb = Vec::with_capacity(w * 3);
        let mut alpha = Vec::with_capacity(w);
        for x in 0..w {
            let dir = cam.ray_direction(x as f64 + 0.5, y as f64 + 0.5);
            match intersect(scene, &origin, &dir) {
                Some(hit) => {
                    rgb.extend_from_slice(&shade(&hit, &(-dir), env));
                    alpha.push(1.0);
                }
                None => {
                    rgb.extend_from_slice(&scene.background);
                    alpha.push(0.0);
                }
            }
        }
        (rgb, alpha)
    });
    let mut img = ImageBuffer::new(cam.width, cam.height);
    let mut mask = AlphaMask::full(cam.width, cam.height);
    for (y, (rgb, alpha)) in rows.into_iter().enumerate() {
        img.data[y * w * 3..(y + 1) * w * 3].copy_from_slice(&rgb);
        mask.data[y * w..(y + 1) * w].copy_from_slice(&alpha);
    }
    (img, mask)
}

/// Render `scene` (in its own frame) from `cam` under `env.rotated(light_angle)`.
pub fn render_reference(
    scene: &SyntheticScene,
    cam: &CameraPose,
    env: &EnvLight,
    light_angle: f64,
) -> (ImageBuffer, AlphaMask) {
    render_with_env(scene, cam, &env.rotated(light_angle))
}

/// Render the physical setup: the object spun by `turntable_angle` on the
/// turntable, seen from a world-fixed camera under the world-fixed `env`.
pub fn render_world(
    scene: &SyntheticScene,
    world_cam: &CameraPose,
    env: &EnvLight,
    turntable_angle: f64,
) -> (ImageBuffer, AlphaMask) {
    render_with_env(&scene.rotated(turntable_angle), world_cam, env)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetEntry {
    pub frame: ScheduleEntry,
    pub image: ImageBuffer,
    pub mask: AlphaMask,
}

/// Rendered frames of a capture schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub width: u32,
    pub height: u32,
    pub entries: Vec<DatasetEntry>,
    pub env: EnvLight,
    pub scene_hash: String,
    pub background: [f64; 3],
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Light rotations present in the data.
    pub fn thetas(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.frame.light_rotation).collect()
    }

    /// Largest object-centered radius seen by any camera, for cloud sizing.
    pub fn camera_distance(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.frame.object_frame_pose.center().norm())
            .fold(0.0, f64::max)
    }
}

/// Render every schedule entry from its object-frame pose under the
/// object-frame light. Cameras are rescaled to `resolution`.
pub fn generate_dataset(
    scene: &SyntheticScene,
    schedule: &CaptureSchedule,
    env: &EnvLight,
    resolution: (u32, u32),
) -> Result<Dataset> {
    if schedule.is_empty() {
        return Err(Error::invalid("cannot render an empty schedule"));
    }
    scene.validate()?;
    let (w, h) = resolution;
    if w == 0 || h == 0 {
        return Err(Error::invalid("resolution must be at least 1x1"));
    }
    let entries = par::map_slice(&schedule.entries, |e| {
        let mut frame = e.clone();
        frame.world_pose = frame.world_pose.with_resolution(w, h);
        frame.object_frame_pose = frame.object_frame_pose.with_resolution(w, h);
        let (image, mask) = render_reference(
            scene,
            &frame.object_frame_pose,
            env,
            frame.object_frame_env_angle(),
        );
        DatasetEntry { frame, image, mask }
    });
    Ok(Dataset {
        width: w,
        height: h,
        entries,
        env: env.clone(),
        scene_hash: scene.hash(),
        background: scene.background,
    })
}
