//! The shared radiance decoder: `INPUT_DIM -> hidden -> hidden -> 3`,
//! rectified hidden layers and a sigmoid output.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::encoding::INPUT_DIM;
use crate::par;

pub const HIDDEN: usize = 128;
/// Rows per parallel work item; fixed so reductions are reproducible.
const CHUNK: usize = 256;

/// All weights in one flat buffer:
/// `w1[h x in] | b1[h] | w2[h x h] | b2[h] | w3[3 x h] | b3[3]`, row-major
/// `[out][in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub hidden: usize,
    pub data: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    end: usize,
}

fn layout(h: usize) -> Layout {
    let w1 = 0;
    let b1 = w1 + h * INPUT_DIM;
    let w2 = b1 + h;
    let b2 = w2 + h * h;
    let w3 = b2 + h;
    let b3 = w3 + 3 * h;
    Layout {
        w1,
        b1,
        w2,
        b2,
        w3,
        b3,
        end: b3 + 3,
    }
}

pub fn param_count(hidden: usize) -> usize {
    layout(hidden).end
}

/// Cached activations of a batched forward pass.
pub struct MlpActivations {
    pub rows: usize,
    pub input: Vec<f64>,
    z1: Vec<f64>,
    h1: Vec<f64>,
    z2: Vec<f64>,
    h2: Vec<f64>,
    pub output: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `c[m x n] = a[m x k] * b^T` with `b` stored row-major as `[n x k]`.
fn gemm_abt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    if m == 0 {
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), 1, k as isize,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c[m x n] = a[m x k] * b[k x n]`, all row-major.
fn gemm_ab(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    if m == 0 {
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c[m x n] += a^T * b` with `a` stored `[rows x m]` and `b` `[rows x n]`.
fn gemm_atb_acc(rows: usize, m: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    if rows == 0 {
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            m, rows, n, 1.0,
            a.as_ptr(), 1, m as isize,
            b.as_ptr(), n as isize, 1,
            1.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

impl MlpParams {
    pub fn zeros(hidden: usize) -> Self {
        MlpParams {
            hidden,
            data: vec![0.0; param_count(hidden)],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(hidden: usize, rng: &mut impl Rng) -> Self {
        let mut p = MlpParams::zeros(hidden);
        let l = layout(hidden);
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, fan_out: usize| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("valid bounds");
            for v in &mut p.data[range] {
                *v = dist.sample(rng);
            }
        };
        fill(l.w1..l.b1, INPUT_DIM, hidden);
        fill(l.w2..l.b2, hidden, hidden);
        fill(l.w3..l.b3, hidden, 3);
        p
    }

    fn layout(&self) -> Layout {
        layout(self.hidden)
    }

    pub fn w1(&self) -> &[f64] {
        let l = self.layout();
        &self.data[l.w1..l.b1]
    }
    pub fn b1(&self) -> &[f64] {
        let l = self.layout();
        &self.data[l.b1..l.w2]
    }
    pub fn w2(&self) -> &[f64] {
        let l = self.layout();
        &self.data[l.w2..l.b2]
    }
    pub fn b2(&self) -> &[f64] {
        let l = self.layout();
        &self.data[l.b2..l.w3]
    }
    pub fn w3(&self) -> &[f64] {
        let l = self.layout();
        &self.data[l.w3..l.b3]
    }
    pub fn b3(&self) -> &[f64] {
        let l = self.layout();
        &self.data[l.b3..l.end]
    }
    pub fn b3_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        &mut self.data[l.b3..l.end]
    }
    pub fn w1_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        &mut self.data[l.w1..l.b1]
    }
    pub fn w2_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        &mut self.data[l.w2..l.b2]
    }
    pub fn w3_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        &mut self.data[l.w3..l.b3]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn forward_chunk(&self, input: &[f64]) -> [Vec<f64>; 5] {
        let h = self.hidden;
        let rows = input.len() / INPUT_DIM;
        let mut z1 = vec![0.0; rows * h];
        gemm_abt(rows, INPUT_DIM, h, input, self.w1(), &mut z1);
        let b1 = self.b1();
        for row in z1.chunks_exact_mut(h) {
            for (v, b) in row.iter_mut().zip(b1) {
                *v += b;
            }
        }
        let h1: Vec<f64> = z1.iter().map(|&v| v.max(0.0)).collect();
        let mut z2 = vec![0.0; rows * h];
        gemm_abt(rows, h, h, &h1, self.w2(), &mut z2);
        let b2 = self.b2();
        for row in z2.chunks_exact_mut(h) {
            for (v, b) in row.iter_mut().zip(b2) {
                *v += b;
            }
        }
        let h2: Vec<f64> = z2.iter().map(|&v| v.max(0.0)).collect();
        let mut out = vec![0.0; rows * 3];
        gemm_abt(rows, h, 3, &h2, self.w3(), &mut out);
        let b3 = self.b3();
        for row in out.chunks_exact_mut(3) {
            for (v, b) in row.iter_mut().zip(b3) {
                *v = sigmoid(*v + b);
            }
        }
        [z1, h1, z2, h2, out]
    }

    /// Batched forward over `input` (`rows x INPUT_DIM`, row-major).
    pub fn forward_batch(&self, input: Vec<f64>) -> MlpActivations {
        let rows = input.len() / INPUT_DIM;
        let n_chunks = rows.div_ceil(CHUNK);
        let parts = par::map_range(n_chunks, |c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(rows);
            self.forward_chunk(&input[lo * INPUT_DIM..hi * INPUT_DIM])
        });
        let mut act = MlpActivations {
            rows,
            input,
            z1: Vec::with_capacity(rows * self.hidden),
            h1: Vec::with_capacity(rows * self.hidden),
            z2: Vec::with_capacity(rows * self.hidden),
            h2: Vec::with_capacity(rows * self.hidden),
            output: Vec::with_capacity(rows * 3),
        };
        for [z1, h1, z2, h2, out] in parts {
            act.z1.extend(z1);
            act.h1.extend(h1);
            act.z2.extend(z2);
            act.h2.extend(h2);
            act.output.extend(out);
        }
        act
    }

    /// Single-input forward.
    pub fn forward(&self, encoded: &[f64; INPUT_DIM]) -> [f64; 3] {
        let [_, _, _, _, out] = self.forward_chunk(encoded);
        [out[0], out[1], out[2]]
    }

    /// Reverse pass. `grad_output` is `rows x 3`. Returns the parameter
    /// gradient (same layout as `data`) and the input gradient
    /// (`rows x INPUT_DIM`).
    pub fn backward_batch(&self, act: &MlpActivations, grad_output: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let h = self.hidden;
        let l = self.layout();
        let rows = act.rows;
        let n_chunks = rows.div_ceil(CHUNK);
        let parts = par::map_range(n_chunks, |c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(rows);
            let r = hi - lo;
            let out = &act.output[lo * 3..hi * 3];
            let g3: Vec<f64> = out
                .iter()
                .zip(&grad_output[lo * 3..hi * 3])
                .map(|(&y, &g)| g * y * (1.0 - y))
                .collect();
            let mut pg = vec![0.0; l.end];
            let h2 = &act.h2[lo * h..hi * h];
            gemm_atb_acc(r, 3, h, &g3, h2, &mut pg[l.w3..l.b3]);
            for row in g3.chunks_exact(3) {
                for k in 0..3 {
                    pg[l.b3 + k] += row[k];
                }
            }
            let mut gz2 = vec![0.0; r * h];
            gemm_ab(r, 3, h, &g3, self.w3(), &mut gz2);
            for (g, &z) in gz2.iter_mut().zip(&act.z2[lo * h..hi * h]) {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }
            let h1 = &act.h1[lo * h..hi * h];
            gemm_atb_acc(r, h, h, &gz2, h1, &mut pg[l.w2..l.b2]);
            for row in gz2.chunks_exact(h) {
                for (acc, v) in pg[l.b2..l.w3].iter_mut().zip(row) {
                    *acc += v;
                }
            }
            let mut gz1 = vec![0.0; r * h];
            gemm_ab(r, h, h, &gz2, self.w2(), &mut gz1);
            for (g, &z) in gz1.iter_mut().zip(&act.z1[lo * h..hi * h]) {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }
            let x = &act.input[lo * INPUT_DIM..hi * INPUT_DIM];
            gemm_atb_acc(r, h, INPUT_DIM, &gz1, x, &mut pg[l.w1..l.b1]);
            for row in gz1.chunks_exact(h) {
                for (acc, v) in pg[l.b1..l.w2].iter_mut().zip(row) {
                    *acc += v;
                }
            }
            let mut gx = vec![0.0; r * INPUT_DIM];
            gemm_ab(r, h, INPUT_DIM, &gz1, self.w1(), &mut gx);
            (pg, gx)
        });
        let mut param_grad = vec![0.0; l.end];
        let mut input_grad = Vec::with_capacity(rows * INPUT_DIM);
        for (pg, gx) in parts {
            for (a, b) in param_grad.iter_mut().zip(&pg) {
                *a += b;
            }
            input_grad.extend(gx);
        }
        (param_grad, input_grad)
    }
}

/// Single-input forward.
pub fn mlp_forward(params: &MlpParams, encoded: &[f64; INPUT_DIM]) -> [f64; 3] {
    params.forward(encoded)
}

/// Gradients of `grad_color · mlp_forward(params, encoded)` with respect to
/// the parameters and the encoded input.
pub fn mlp_backward(params: &MlpParams, encoded: &[f64; INPUT_DIM], grad_color: [f64; 3]) -> (Vec<f64>, Vec<f64>) {
    let act = params.forward_batch(encoded.to_vec());
    params.backward_batch(&act, &grad_color)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// Straightforward loop implementation used as an oracle.
    fn naive_forward(p: &MlpParams, x: &[f64]) -> [f64; 3] {
        let h = p.hidden;
        let dense = |w: &[f64], b: &[f64], x: &[f64], n_out: usize| -> Vec<f64> {
            (0..n_out)
                .map(|j| b[j] + (0..x.len()).map(|k| w[j * x.len() + k] * x[k]).sum::<f64>())
                .collect()
        };
        let h1: Vec<f64> = dense(p.w1(), p.b1(), x, h).into_iter().map(|v| v.max(0.0)).collect();
        let h2: Vec<f64> = dense(p.w2(), p.b2(), &h1, h).into_iter().map(|v| v.max(0.0)).collect();
        let o = dense(p.w3(), p.b3(), &h2, 3);
        [0, 1, 2].map(|k| 1.0 / (1.0 + (-o[k]).exp()))
    }

    fn random_input(rng: &mut impl Rng) -> [f64; INPUT_DIM] {
        let mut x = [0.0; INPUT_DIM];
        for v in &mut x {
            *v = rng.random_range(-1.0..1.0);
        }
        x
    }

    #[test]
    fn zero_params_give_half() {
        let p = MlpParams::zeros(HIDDEN);
        assert_eq!(mlp_forward(&p, &[0.3; INPUT_DIM]), [0.5; 3]);
    }

    #[test]
    fn saturated_output_bias() {
        let mut p = MlpParams::zeros(HIDDEN);
        p.b3_mut().copy_from_slice(&[20.0; 3]);
        for c in mlp_forward(&p, &[1.0; INPUT_DIM]) {
            assert!((c - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn matches_naive_implementation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut p = MlpParams::init(HIDDEN, &mut rng);
        for v in p.data.iter_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
        let rows = 600;
        let inputs: Vec<[f64; INPUT_DIM]> = (0..rows).map(|_| random_input(&mut rng)).collect();
        let act = p.forward_batch(inputs.iter().flatten().copied().collect());
        for (r, x) in inputs.iter().enumerate() {
            let want = naive_forward(&p, x);
            for k in 0..3 {
                assert!((act.output[r * 3 + k] - want[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let p = MlpParams::init(HIDDEN, &mut rng);
        let (pg, ig) = mlp_backward(&p, &random_input(&mut rng), [0.0; 3]);
        assert!(pg.iter().chain(&ig).all(|&v| v == 0.0));
    }

    #[test]
    fn one_hot_chain() {
        // input 0 -> hidden 0 -> hidden 0 -> output 1, all weights one-hot.
        let mut p = MlpParams::zeros(HIDDEN);
        let (a, b, c) = (0.7, 1.3, -0.4);
        p.w1_mut()[0] = a;
        p.w2_mut()[0] = b;
        p.w3_mut()[HIDDEN] = c;
        let mut x = [0.0; INPUT_DIM];
        x[0] = 0.9;
        let y = mlp_forward(&p, &x);
        let s = 1.0 / (1.0 + (-(c * b * a * 0.9f64)).exp());
        assert!((y[1] - s).abs() < 1e-15);
        let (pg, ig) = mlp_backward(&p, &x, [0.0, 1.0, 0.0]);
        let ds = s * (1.0 - s);
        assert!((ig[0] - ds * c * b * a).abs() < 1e-15);
        assert!((pg[0] - ds * c * b * 0.9).abs() < 1e-15);
        let l = layout(HIDDEN);
        assert!((pg[l.w3 + HIDDEN] - ds * b * a * 0.9).abs() < 1e-15);
        assert!((pg[l.b3 + 1] - ds).abs() < 1e-15);
    }

    #[test]
    fn matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let p = MlpParams::init(16, &mut rng);
        let x = random_input(&mut rng);
        let g = [0.3, -1.1, 0.7];
        let f = |p: &MlpParams, x: &[f64; INPUT_DIM]| {
            let y = mlp_forward(p, x);
            (0..3).map(|k| g[k] * y[k]).sum::<f64>()
        };
        let (pg, ig) = mlp_backward(&p, &x, g);
        let h = 1e-5;
        let check = |fd: f64, an: f64, what: &str| {
            let err = (fd - an).abs();
            assert!(err < 1e-8 || err < 1e-3 * fd.abs().max(an.abs()), "{what}: {fd} vs {an}");
        };
        for i in 0..p.data.len() {
            let mut a = p.clone();
            let mut b = p.clone();
            a.data[i] += h;
            b.data[i] -= h;
            check((f(&a, &x) - f(&b, &x)) / (2.0 * h), pg[i], &format!("param {i}"));
        }
        for i in 0..INPUT_DIM {
            let mut a = x;
            let mut b = x;
            a[i] += h;
            b[i] -= h;
            check((f(&p, &a) - f(&p, &b)) / (2.0 * h), ig[i], &format!("input {i}"));
        }
    }
}
