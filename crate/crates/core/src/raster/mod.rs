//! Differentiable Gaussian-splat rasterizer.
//!
//! Forward: project every Gaussian to a 2D splat (EWA, with a small
//! dilation), sort by depth with index tie-break, then composite front to
//! back per pixel. Backward: exact reverse-mode gradients of the same
//! computation, ignoring the (piecewise constant) sort order.

pub(crate) mod backward;
mod forward;
mod project;

pub use backward::{render_backward, RenderGrads};
pub use forward::{render_splats, ForwardState, Prepared, RenderOutput};
pub use project::{project_gaussian, quaternion_rotation, Projection, Splat2D};

/// Added to the diagonal of every projected covariance, pixels².
pub const DILATION: f64 = 0.3;
pub const ALPHA_CAP: f64 = 0.99;
/// Compositing stops once transmittance drops below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
pub const NEAR_PLANE: f64 = 0.05;
/// Squared Mahalanobis radius beyond which a splat is not evaluated. At this
/// distance the Gaussian falloff is below 1.4e-11.
pub const CUTOFF_Q: f64 = 50.0;
pub const TILE: usize = 16;
