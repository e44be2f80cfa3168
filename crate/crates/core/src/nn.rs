//! Small dense building blocks with hand-written backward passes.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: &str, shape: &[usize]) -> Self {
        Self { name: name.to_string(), shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    /// Uniform in `[-scale, scale]`.
    pub fn uniform<R: Rng>(name: &str, shape: &[usize], scale: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: (0..n).map(|_| rng.gen_range(-scale..=scale)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }
}

/// A named collection of tensors that an optimizer can walk in a fixed order.
pub trait Module: Clone {
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x = 0.0);
        }
        z
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= k);
        }
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
        }
    }

    /// Parameter addressed by (tensor index, element index).
    fn get(&self, tensor: usize, index: usize) -> f64 {
        self.tensors()[tensor].data[index]
    }

    fn set(&mut self, tensor: usize, index: usize, value: f64) {
        self.tensors_mut()[tensor].data[index] = value;
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON tensor dump. Shapes and names are checked on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub kind: String,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn of<M: Module>(kind: &str, module: &M) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            kind: kind.to_string(),
            tensors: module.tensors().into_iter().cloned().collect(),
        }
    }

    /// Copies the stored tensors into a clone of `template`.
    pub fn restore<M: Module>(&self, kind: &str, template: &M) -> Result<M, String> {
        if self.version != CHECKPOINT_VERSION {
            return Err(format!("unsupported checkpoint version {}", self.version));
        }
        if self.kind != kind {
            return Err(format!("checkpoint holds '{}', expected '{kind}'", self.kind));
        }
        let mut out = template.clone();
        let slots = out.tensors_mut();
        if slots.len() != self.tensors.len() {
            return Err(format!("expected {} tensors, found {}", slots.len(), self.tensors.len()));
        }
        for (slot, t) in slots.into_iter().zip(&self.tensors) {
            if slot.name != t.name || slot.shape != t.shape || t.data.len() != slot.data.len() {
                return Err(format!(
                    "tensor '{}' {:?} does not match '{}' {:?}",
                    t.name, t.shape, slot.name, slot.shape
                ));
            }
            slot.data.clone_from(&t.data);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<M: Module>(params: &M) -> Self {
        let shapes: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: shapes.clone(), v: shapes }
    }

    /// One bias-corrected step. With `lr == 0` parameters are left untouched
    /// bit for bit.
    pub fn step<M: Module>(&mut self, params: &mut M, grads: &M, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, (p, g)) in params.tensors_mut().into_iter().zip(grads.tensors()).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                if lr != 0.0 {
                    let mh = m[i] / bc1;
                    let vh = v[i] / bc2;
                    p.data[i] -= lr * mh / (vh.sqrt() + self.eps);
                }
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `y = W x` for row-major `W` of shape (rows, x.len()).
pub fn matvec(w: &[f64], x: &[f64], rows: usize) -> Vec<f64> {
    let cols = x.len();
    (0..rows).map(|r| dot(&w[r * cols..(r + 1) * cols], x)).collect()
}

/// `y += W x`.
pub fn matvec_acc(w: &[f64], x: &[f64], y: &mut [f64]) {
    let cols = x.len();
    for (r, yr) in y.iter_mut().enumerate() {
        *yr += dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// `x_grad += W^T dy`.
pub fn matvec_t_acc(w: &[f64], dy: &[f64], x_grad: &mut [f64]) {
    let cols = x_grad.len();
    for (r, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (g, &wv) in x_grad.iter_mut().zip(row) {
            *g += d * wv;
        }
    }
}

/// `W_grad += dy x^T`.
pub fn outer_acc(w_grad: &mut [f64], dy: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let row = &mut w_grad[r * cols..(r + 1) * cols];
        for (g, &xv) in row.iter_mut().zip(x) {
            *g += d * xv;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub const GRAD_FLOOR: f64 = 1e-5;

/// Relative error with the denominator floored at `GRAD_FLOOR`: central
/// differences at h = 1e-5 carry about 1e-10 of rounding noise, which would
/// otherwise dominate on gradients that are exactly zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// Probe indices spread round-robin over the tensors, uniform inside each.
pub fn probe_indices<M: Module>(params: &M, probes: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    (0..probes)
        .map(|k| {
            let t = k % sizes.len();
            (t, rng.gen_range(0..sizes[t]))
        })
        .collect()
}

/// Largest relative error between `grad` and central differences of
/// `objective` at the probed parameters.
pub fn finite_difference_error<M: Module>(
    params: &M,
    grad: &M,
    probes: &[(usize, usize)],
    h: f64,
    objective: impl Fn(&M) -> f64,
) -> f64 {
    let mut work = params.clone();
    let mut worst: f64 = 0.0;
    for &(t, i) in probes {
        let orig = params.get(t, i);
        work.set(t, i, orig + h);
        let lp = objective(&work);
        work.set(t, i, orig - h);
        let lm = objective(&work);
        work.set(t, i, orig);
        let err = relative_error(grad.get(t, i), (lp - lm) / (2.0 * h));
        worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
    }
    worst
}

/// Single LSTM cell. Gate blocks in `wx`, `wh`, `b` are ordered
/// input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub wx: Tensor,
    pub wh: Tensor,
    pub b: Tensor,
}

impl LstmParams {
    pub fn zeros(prefix: &str, input: usize, hidden: usize) -> Self {
        Self {
            wx: Tensor::zeros(&format!("{prefix}.wx"), &[4 * hidden, input]),
            wh: Tensor::zeros(&format!("{prefix}.wh"), &[4 * hidden, hidden]),
            b: Tensor::zeros(&format!("{prefix}.b"), &[4 * hidden]),
        }
    }

    /// Uniform in +-1/sqrt(H), forget bias +1.
    pub fn init<R: Rng>(prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let s = 1.0 / (hidden as f64).sqrt();
        let mut p = Self {
            wx: Tensor::uniform(&format!("{prefix}.wx"), &[4 * hidden, input], s, rng),
            wh: Tensor::uniform(&format!("{prefix}.wh"), &[4 * hidden, hidden], s, rng),
            b: Tensor::uniform(&format!("{prefix}.b"), &[4 * hidden], s, rng),
        };
        p.b.data[hidden..2 * hidden].iter_mut().for_each(|x| *x += 1.0);
        p
    }

    pub fn hidden(&self) -> usize {
        self.wh.cols()
    }

    pub fn input(&self) -> usize {
        self.wx.cols()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.wx, &self.wh, &self.b]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.wx, &mut self.wh, &mut self.b]
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// Returns `(h', c')`.
pub fn lstm_cell(x: &[f64], h: &[f64], c: &[f64], p: &LstmParams) -> (Vec<f64>, Vec<f64>) {
    let (h2, c2, _) = lstm_forward(x, h, c, p);
    (h2, c2)
}

pub fn lstm_forward(x: &[f64], h: &[f64], c: &[f64], p: &LstmParams) -> (Vec<f64>, Vec<f64>, LstmCache) {
    let hd = p.hidden();
    let mut z = p.b.data.clone();
    matvec_acc(&p.wx.data, x, &mut z);
    matvec_acc(&p.wh.data, h, &mut z);
    let i: Vec<f64> = z[0..hd].iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<f64> = z[hd..2 * hd].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<f64> = z[2 * hd..3 * hd].iter().map(|&v| v.tanh()).collect();
    let o: Vec<f64> = z[3 * hd..4 * hd].iter().map(|&v| sigmoid(v)).collect();
    let c2: Vec<f64> = (0..hd).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c2.iter().map(|v| v.tanh()).collect();
    let h2: Vec<f64> = (0..hd).map(|k| o[k] * tanh_c[k]).collect();
    let cache = LstmCache { x: x.to_vec(), h_prev: h.to_vec(), c_prev: c.to_vec(), i, f, g, o, tanh_c };
    (h2, c2, cache)
}

/// Given gradients w.r.t. `h'` and `c'`, accumulates parameter gradients
/// into `grad` and returns `(dx, dh, dc)` for the cell inputs.
pub fn lstm_backward(
    cache: &LstmCache,
    dh_next: &[f64],
    dc_next: &[f64],
    p: &LstmParams,
    grad: &mut LstmParams,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hd = p.hidden();
    let mut dz = vec![0.0; 4 * hd];
    let mut dc_prev = vec![0.0; hd];
    for k in 0..hd {
        let (i, f, g, o, tc) = (cache.i[k], cache.f[k], cache.g[k], cache.o[k], cache.tanh_c[k]);
        let dc = dc_next[k] + dh_next[k] * o * (1.0 - tc * tc);
        dz[k] = dc * g * i * (1.0 - i);
        dz[hd + k] = dc * cache.c_prev[k] * f * (1.0 - f);
        dz[2 * hd + k] = dc * i * (1.0 - g * g);
        dz[3 * hd + k] = dh_next[k] * tc * o * (1.0 - o);
        dc_prev[k] = dc * f;
    }
    outer_acc(&mut grad.wx.data, &dz, &cache.x);
    outer_acc(&mut grad.wh.data, &dz, &cache.h_prev);
    axpy(&mut grad.b.data, 1.0, &dz);
    let mut dx = vec![0.0; cache.x.len()];
    matvec_t_acc(&p.wx.data, &dz, &mut dx);
    let mut dh = vec![0.0; hd];
    matvec_t_acc(&p.wh.data, &dz, &mut dh);
    (dx, dh, dc_prev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_cell_is_zero() {
        let p = LstmParams::zeros("c", 3, 4);
        let (h, c) = lstm_cell(&[1.0, -2.0, 0.5], &[0.0; 4], &[0.0; 4], &p);
        assert!(h.iter().chain(&c).all(|&v| v == 0.0));
    }

    #[test]
    fn one_dim_hand_value() {
        let mut p = LstmParams::zeros("c", 1, 1);
        p.b.data[2] = 0.5f64.atanh();
        let (h, c) = lstm_cell(&[0.7], &[0.0], &[0.0], &p);
        assert!((c[0] - 0.25).abs() < 1e-15);
        assert!((h[0] - 0.5 * 0.25f64.tanh()).abs() < 1e-15);
        assert!((h[0] - 0.12245).abs() < 1e-5);
        let (_, c) = lstm_cell(&[0.7], &[0.0], &[0.4], &p);
        assert!((c[0] - (0.5 * 0.4 + 0.25)).abs() < 1e-15);
    }

    fn cell_loss(x: &[f64], h: &[f64], c: &[f64], p: &LstmParams, wh: &[f64], wc: &[f64]) -> f64 {
        let (h2, c2) = lstm_cell(x, h, c, p);
        dot(&h2, wh) + dot(&c2, wc)
    }

    #[test]
    fn cell_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (ni, nh) = (3, 5);
        let mut p = LstmParams::init("c", ni, nh, &mut rng);
        let x: Vec<f64> = (0..ni).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..nh).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..nh).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wh: Vec<f64> = (0..nh).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wc: Vec<f64> = (0..nh).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, _, cache) = lstm_forward(&x, &h, &c, &p);
        let mut grad = LstmParams::zeros("g", ni, nh);
        let (dx, dh, dc) = lstm_backward(&cache, &wh, &wc, &p, &mut grad);
        let eps = 1e-5;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        let mut worst: f64 = 0.0;
        for t in 0..3 {
            for k in 0..p.tensors()[t].len() {
                let orig = p.tensors()[t].data[k];
                p.tensors_mut()[t].data[k] = orig + eps;
                let lp = cell_loss(&x, &h, &c, &p, &wh, &wc);
                p.tensors_mut()[t].data[k] = orig - eps;
                let lm = cell_loss(&x, &h, &c, &p, &wh, &wc);
                p.tensors_mut()[t].data[k] = orig;
                worst = worst.max(rel(grad.tensors()[t].data[k], (lp - lm) / (2.0 * eps)));
            }
        }
        let mut check_input = |v: &[f64], analytic: &[f64], which: usize| {
            for k in 0..v.len() {
                let mut a = v.to_vec();
                a[k] += eps;
                let mut b = v.to_vec();
                b[k] -= eps;
                let (lp, lm) = match which {
                    0 => (cell_loss(&a, &h, &c, &p, &wh, &wc), cell_loss(&b, &h, &c, &p, &wh, &wc)),
                    1 => (cell_loss(&x, &a, &c, &p, &wh, &wc), cell_loss(&x, &b, &c, &p, &wh, &wc)),
                    _ => (cell_loss(&x, &h, &a, &p, &wh, &wc), cell_loss(&x, &h, &b, &p, &wh, &wc)),
                };
                worst = worst.max(rel(analytic[k], (lp - lm) / (2.0 * eps)));
            }
        };
        check_input(&x, &dx, 0);
        check_input(&h, &dh, 1);
        check_input(&c, &dc, 2);
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, 999.0, -5.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > p[1] && p[1] > p[2]);
    }
}
