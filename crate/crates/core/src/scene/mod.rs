//! Core value types shared by every stage of the pipeline.

mod camera;
mod env;
mod gaussian;
mod image;
mod schedule;
pub mod sh;

pub use camera::{rotate_pose_about_axis, CameraPose};
pub use env::{eval_env, rotate_env, EnvLight, DEFAULT_ENV_DEGREE};
pub use gaussian::{sigmoid, logit, Gaussian, GaussianCloud, LATENT_DIM};
pub use image::{AlphaMask, ImageBuffer};
pub use schedule::{CaptureSchedule, ScheduleEntry};

/// World up axis; the turntable spins about it.
pub const UP: [f64; 3] = [0.0, 0.0, 1.0];
