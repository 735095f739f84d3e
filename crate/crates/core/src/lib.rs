//! Turntable capture pipeline: capture planning over the (view × light
//! rotation) sampling domain, a synthetic turntable data generator, a
//! differentiable Gaussian-splat renderer with rotation-conditioned neural
//! colors, SH distillation, rotation-combination relighting and the
//! swing-angle experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod harness;
pub mod io;
pub mod par;
pub mod planner;
pub mod radiance;
pub mod raster;
pub mod reference;
pub mod relight;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
