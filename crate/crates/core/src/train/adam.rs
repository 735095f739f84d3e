//! First-order adaptive-moment optimizer over flat parameter groups.

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-15;

/// Moment estimates for one parameter group. `stride` values belong to each
/// Gaussian so per-Gaussian rows can be dropped when pruning.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub stride: usize,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize, stride: usize) -> Self {
        AdamState {
            stride,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// Apply one update at step `t` (1-based) with learning rate `lr`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, t: u64) {
        debug_assert_eq!(params.len(), grads.len());
        debug_assert_eq!(params.len(), self.m.len());
        let bc1 = 1.0 - BETA1.powf(t as f64);
        let bc2 = 1.0 - BETA2.powf(t as f64);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= lr * mh / (vh.sqrt() + EPSILON);
        }
    }

    /// Keep the rows whose flag is set.
    pub fn retain(&mut self, keep: &[bool]) {
        let s = self.stride;
        let filter = |src: &[f64]| -> Vec<f64> {
            keep.iter()
                .enumerate()
                .filter(|(_, &k)| k)
                .flat_map(|(i, _)| src[i * s..(i + 1) * s].iter().copied())
                .collect()
        };
        self.m = filter(&self.m);
        self.v = filter(&self.v);
    }
}
