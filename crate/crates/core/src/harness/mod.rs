//! Reproducible experiment jobs: held-out test sets, the swing-angle sweep
//! under a fixed capture-time budget, and its light-smoothness variant.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use crate::planner::{generate_schedule, sample_count, solve_budget, CameraRig, PlannerConfig, Sampling, Strategy};
use crate::reference::{generate_dataset, Dataset, SyntheticScene};
use crate::scene::{CaptureSchedule, EnvLight, ScheduleEntry};
use crate::train::{evaluate, train, InitSource, Mode, TrainConfig};
use crate::{Error, Result};

/// Test cameras sit halfway between the training azimuths of a ring of
/// `cameras`, so no test view coincides with a training view.
fn test_poses(rig: &CameraRig, cameras: usize) -> Result<Vec<crate::scene::CameraPose>> {
    let shifted = CameraRig {
        azimuth_offset: rig.azimuth_offset + PI / cameras.max(1) as f64,
        ..rig.clone()
    };
    shifted.poses(cameras)
}

/// Held-out views under the unrotated light.
pub fn static_test_schedule(rig: &CameraRig, cameras: usize) -> Result<CaptureSchedule> {
    rotating_test_schedule_at(rig, cameras, &[0.0])
}

/// Held-out views, each at `thetas` light rotations offset by half a step
/// from multiples of `2π / thetas`.
pub fn rotating_test_schedule(rig: &CameraRig, cameras: usize, thetas: usize) -> Result<CaptureSchedule> {
    if thetas == 0 {
        return Err(Error::invalid("need at least one test rotation"));
    }
    let angles: Vec<f64> = (0..thetas).map(|j| (j as f64 + 0.5) * TAU / thetas as f64).collect();
    rotating_test_schedule_at(rig, cameras, &angles)
}

pub fn rotating_test_schedule_at(rig: &CameraRig, cameras: usize, thetas: &[f64]) -> Result<CaptureSchedule> {
    if cameras == 0 {
        return Err(Error::invalid("need at least one test camera"));
    }
    let pivot = rig.pivot_vector();
    let mut entries = Vec::new();
    for (i, pose) in test_poses(rig, cameras)?.into_iter().enumerate() {
        for &t in thetas {
            entries.push(ScheduleEntry::new(i, pose.clone(), t, &pivot)?);
        }
    }
    Ok(CaptureSchedule {
        entries,
        pivot: rig.pivot,
    })
}

/// Strategy used for a swing angle: `0` is static, `2π` full rotation.
pub fn strategy_for(s: f64) -> Strategy {
    if s <= 0.0 {
        Strategy::Static
    } else if s >= TAU - 1e-12 {
        Strategy::Rotating
    } else {
        Strategy::Swing(s)
    }
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub angles: Vec<f64>,
    /// Capture-time budget, seconds.
    pub budget: f64,
    /// Turntable speed, rad/s.
    pub speed: f64,
    /// Relocation pause, seconds.
    pub pause: f64,
    /// Frames per radian of travel.
    pub density: f64,
    /// Images per minute for the static row, which the timing model does
    /// not cover.
    pub static_rate: f64,
    pub resolution: (u32, u32),
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub rig: CameraRig,
    pub test_cameras: usize,
    pub test_thetas: usize,
    pub scene: SyntheticScene,
    pub env: EnvLight,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            angles: vec![0.0, 0.05 * PI, 0.1 * PI, 0.2 * PI, 0.25 * PI, 0.5 * PI, PI, TAU],
            budget: 120.0,
            speed: 0.2 * PI / 3.15,
            pause: 3.0,
            density: 7.0 / (0.2 * PI),
            static_rate: 25.0,
            resolution: (32, 32),
            train: TrainConfig {
                iterations: 1500,
                gaussians: 800,
                ..TrainConfig::default()
            },
            seeds: vec![0],
            rig: CameraRig::default(),
            test_cameras: 4,
            test_thetas: 8,
            scene: SyntheticScene::tabletop(),
            env: EnvLight::studio(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.angles.len() < 2 {
            return Err(Error::invalid("a sweep needs at least two angles"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("a sweep needs at least one seed"));
        }
        if !(self.static_rate > 0.0 && self.static_rate.is_finite()) {
            return Err(Error::invalid("static rate must be positive"));
        }
        for &s in &self.angles {
            strategy_for(s).validate()?;
        }
        self.train.validate()
    }

    /// Camera positions and frame count for swing angle `s`.
    pub fn plan(&self, s: f64) -> Result<(PlannerConfig, Strategy, usize)> {
        let strategy = strategy_for(s);
        let mut cfg = if strategy == Strategy::Static {
            let m = (self.static_rate * self.budget / 60.0).floor() as usize;
            if m == 0 {
                return Err(Error::BudgetTooSmall {
                    budget: self.budget,
                    segment: 60.0 / self.static_rate,
                });
            }
            PlannerConfig::new(m, self.speed, self.pause, Sampling::Frames(1))
        } else {
            let m = solve_budget(self.budget, s, self.speed, self.pause)?;
            PlannerConfig::new(m, self.speed, self.pause, Sampling::Density(self.density))
        };
        cfg.time_budget = Some(self.budget);
        let p = sample_count(&cfg, strategy);
        Ok((cfg, strategy, p))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub s: f64,
    pub cameras: usize,
    pub samples: usize,
    /// Mean over seeds, then standard deviation over seeds.
    pub psnr_static: f64,
    pub psnr_static_std: f64,
    pub psnr_rotating: f64,
    pub psnr_rotating_std: f64,
    pub wall_time: f64,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

fn argmax_by(rows: &[SweepRow], key: impl Fn(&SweepRow) -> f64) -> Option<f64> {
    rows.iter()
        .filter(|r| !r.failed() && key(r).is_finite())
        .fold(None::<&SweepRow>, |best, r| match best {
            Some(b) if key(b) >= key(r) => Some(b),
            _ => Some(r),
        })
        .map(|r| r.s)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl SweepReport {
    /// Swing angle with the best static-test PSNR.
    pub fn argmax_static(&self) -> Option<f64> {
        argmax_by(&self.rows, |r| r.psnr_static)
    }

    pub fn argmax_rotating(&self) -> Option<f64> {
        argmax_by(&self.rows, |r| r.psnr_rotating)
    }

    /// Spread (max - min) of static-test PSNR across successful rows.
    pub fn static_spread(&self) -> f64 {
        let v: Vec<f64> = self.rows.iter().filter(|r| !r.failed()).map(|r| r.psnr_static).collect();
        if v.is_empty() {
            return 0.0;
        }
        v.iter().copied().fold(f64::MIN, f64::max) - v.iter().copied().fold(f64::MAX, f64::min)
    }

    pub fn to_csv(&self) -> Result<String> {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    format!("{}", r.s),
                    format!("{:.4}", r.s / PI),
                    r.cameras.to_string(),
                    r.samples.to_string(),
                    format!("{:.4}", r.psnr_static),
                    format!("{:.4}", r.psnr_static_std),
                    format!("{:.4}", r.psnr_rotating),
                    format!("{:.4}", r.psnr_rotating_std),
                    format!("{:.3}", r.wall_time),
                    r.error.clone().map_or("ok".into(), |e| format!("failed: {e}")),
                ]
            })
            .collect();
        crate::io::csv_string(
            &[
                "s",
                "s_over_pi",
                "M",
                "P",
                "psnr_static",
                "psnr_static_std",
                "psnr_rotating",
                "psnr_rotating_std",
                "wall_time_s",
                "status",
            ],
            &rows,
        )
    }
}

/// Datasets for one sweep angle.
pub fn sweep_dataset(config: &SweepConfig, s: f64) -> Result<(Dataset, usize, usize)> {
    let (cfg, strategy, p) = config.plan(s)?;
    let rig = config.rig.clone().with_resolution(config.resolution.0, config.resolution.1);
    let schedule = generate_schedule(&cfg, strategy, &rig)?;
    let ds = generate_dataset(&config.scene, &schedule, &config.env, config.resolution)?;
    Ok((ds, cfg.cameras, p))
}

/// Fixed held-out static and rotating test sets shared by every row.
pub fn sweep_test_sets(config: &SweepConfig) -> Result<(Dataset, Dataset)> {
    let rig = config.rig.clone().with_resolution(config.resolution.0, config.resolution.1);
    let st = static_test_schedule(&rig, config.test_cameras)?;
    let rt = rotating_test_schedule(&rig, config.test_cameras, config.test_thetas)?;
    Ok((
        generate_dataset(&config.scene, &st, &config.env, config.resolution)?,
        generate_dataset(&config.scene, &rt, &config.env, config.resolution)?,
    ))
}

fn run_row(config: &SweepConfig, s: f64, tests: &(Dataset, Dataset)) -> Result<SweepRow> {
    let start = Instant::now();
    let (ds, cameras, samples) = sweep_dataset(config, s)?;
    let mut st = Vec::new();
    let mut rt = Vec::new();
    for &seed in &config.seeds {
        let tc = TrainConfig {
            seed,
            ..config.train.clone()
        };
        let model = train(&ds, InitSource::Surface(&config.scene), &tc, Mode::Conditional)?;
        st.push(evaluate(&model, &tests.0)?.mean_psnr);
        rt.push(evaluate(&model, &tests.1)?.mean_psnr);
    }
    let (ps, ps_std) = mean_std(&st);
    let (pr, pr_std) = mean_std(&rt);
    Ok(SweepRow {
        s,
        cameras,
        samples,
        psnr_static: ps,
        psnr_static_std: ps_std,
        psnr_rotating: pr,
        psnr_rotating_std: pr_std,
        wall_time: start.elapsed().as_secs_f64(),
        error: None,
    })
}

/// One row per angle. A failing row is recorded and the sweep goes on.
pub fn run_sweep(config: &SweepConfig, mut progress: impl FnMut(&SweepRow)) -> Result<SweepReport> {
    config.validate()?;
    let tests = sweep_test_sets(config)?;
    let mut rows = Vec::with_capacity(config.angles.len());
    for &s in &config.angles {
        let row = run_row(config, s, &tests).unwrap_or_else(|e| {
            let (cameras, samples) = config.plan(s).map(|(c, _, p)| (c.cameras, p)).unwrap_or((0, 0));
            SweepRow {
                s,
                cameras,
                samples,
                psnr_static: f64::NAN,
                psnr_static_std: f64::NAN,
                psnr_rotating: f64::NAN,
                psnr_rotating_std: f64::NAN,
                wall_time: 0.0,
                error: Some(e.to_string()),
            }
        });
        progress(&row);
        rows.push(row);
    }
    Ok(SweepReport { rows })
}

/// Default PSNR spread (dB) below which a sweep counts as flat.
pub const FLAT_SPREAD_DB: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct BlurLevel {
    /// Band attenuation `exp(-β l (l + 1))`; infinity keeps only the DC band.
    pub beta: f64,
    pub report: SweepReport,
    pub best_static: Option<f64>,
    pub best_rotating: Option<f64>,
    pub flat: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlurReport {
    pub levels: Vec<BlurLevel>,
}

impl BlurReport {
    pub fn to_csv(&self) -> Result<String> {
        let fmt = |v: Option<f64>| v.map_or("none".to_string(), |s| format!("{s}"));
        let rows: Vec<Vec<String>> = self
            .levels
            .iter()
            .map(|l| {
                vec![
                    format!("{}", l.beta),
                    fmt(l.best_static),
                    fmt(l.best_rotating),
                    format!("{:.4}", l.report.static_spread()),
                    if l.flat { "flat".into() } else { "peaked".into() },
                ]
            })
            .collect();
        crate::io::csv_string(&["beta", "best_s_static", "best_s_rotating", "static_spread_db", "shape"], &rows)
    }
}

pub fn summarize_level(beta: f64, report: SweepReport, flat_spread: f64) -> BlurLevel {
    BlurLevel {
        beta,
        best_static: report.argmax_static(),
        best_rotating: report.argmax_rotating(),
        flat: report.static_spread() <= flat_spread,
        report,
    }
}

/// Run the sweep once per light-smoothness level.
pub fn run_blur_sweep(
    config: &SweepConfig,
    betas: &[f64],
    flat_spread: f64,
    mut progress: impl FnMut(f64, &SweepRow),
) -> Result<BlurReport> {
    if betas.is_empty() {
        return Err(Error::invalid("need at least one smoothness level"));
    }
    if betas.iter().any(|b| b.is_nan() || *b < 0.0) {
        return Err(Error::invalid("smoothness levels must be non-negative"));
    }
    let mut levels = Vec::with_capacity(betas.len());
    for &beta in betas {
        let cfg = SweepConfig {
            env: config.env.smoothed(beta),
            ..config.clone()
        };
        let report = run_sweep(&cfg, |r| progress(beta, r))?;
        levels.push(summarize_level(beta, report, flat_spread));
    }
    Ok(BlurReport { levels })
}
