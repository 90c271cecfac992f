//! Small dense-tensor toolkit with hand-written adjoints.
//!
//! Everything is `f64` and row-major. Each forward op has a matching
//! backward that takes the upstream gradient and the values cached by the
//! forward pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Row-major 2-D tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::contract(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::contract("ragged rows"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn row_vector(values: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Stacks rows of `parts` (equal column counts) into one matrix.
    pub fn vstack(parts: &[&Matrix]) -> Result<Self> {
        let cols = parts.first().map_or(0, |m| m.cols);
        if parts.iter().any(|m| m.cols != cols) {
            return Err(Error::contract("vstack: column mismatch"));
        }
        let mut data = Vec::with_capacity(parts.iter().map(|m| m.data.len()).sum());
        for m in parts {
            data.extend_from_slice(&m.data);
        }
        Ok(Self {
            rows: data.len() / cols.max(1),
            cols,
            data,
        })
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| (2.0 * rng::unit(rng) - 1.0) * limit)
        .collect();
    Matrix { rows, cols, data }
}

/// `N(0, 1) * std`.
pub fn normal(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| std * rng::standard_normal(rng)).collect();
    Matrix { rows, cols, data }
}

/// Dense layer `y = x W + b`, `W` is `[d_in x d_out]`, `b` is `[1 x d_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Linear {
    pub fn new(d_in: usize, d_out: usize, rng: &mut Rng) -> Self {
        Self {
            weight: glorot_uniform(d_in, d_out, rng),
            bias: Matrix::zeros(1, d_out),
        }
    }

    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            weight: Matrix::zeros(d_in, d_out),
            bias: Matrix::zeros(1, d_out),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        linear_forward(x, &self.weight, &self.bias)
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &Matrix, dy: &Matrix, grad: &mut Linear) -> Matrix {
        let (n, d_in) = x.shape();
        let d_out = self.weight.cols;
        let mut dx = Matrix::zeros(n, d_in);
        for r in 0..n {
            let xr = x.row(r);
            let dyr = dy.row(r);
            for (j, &g) in dyr.iter().enumerate() {
                grad.bias.data[j] += g;
            }
            for i in 0..d_in {
                let wrow = &self.weight.data[i * d_out..(i + 1) * d_out];
                let gw = &mut grad.weight.data[i * d_out..(i + 1) * d_out];
                let mut acc = 0.0;
                for j in 0..d_out {
                    gw[j] += xr[i] * dyr[j];
                    acc += wrow[j] * dyr[j];
                }
                dx.data[r * d_in + i] = acc;
            }
        }
        dx
    }
}

pub fn linear_forward(x: &Matrix, w: &Matrix, b: &Matrix) -> Result<Matrix> {
    if x.cols != w.rows || b.rows != 1 || b.cols != w.cols {
        return Err(Error::contract(format!(
            "linear: x {:?}, W {:?}, b {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let (n, d_in, d_out) = (x.rows, w.rows, w.cols);
    let mut y = Matrix::zeros(n, d_out);
    for r in 0..n {
        let yr = &mut y.data[r * d_out..(r + 1) * d_out];
        yr.copy_from_slice(&b.data);
        for i in 0..d_in {
            let xi = x.data[r * d_in + i];
            if xi == 0.0 {
                continue;
            }
            let wrow = &w.data[i * d_out..(i + 1) * d_out];
            for j in 0..d_out {
                yr[j] += xi * wrow[j];
            }
        }
    }
    Ok(y)
}

pub fn relu(x: &Matrix) -> Matrix {
    Matrix {
        rows: x.rows,
        cols: x.cols,
        data: x.data.iter().map(|v| v.max(0.0)).collect(),
    }
}

/// Gradient through ReLU given its output.
pub fn relu_backward(out: &Matrix, dy: &Matrix) -> Matrix {
    Matrix {
        rows: dy.rows,
        cols: dy.cols,
        data: out
            .data
            .iter()
            .zip(&dy.data)
            .map(|(&o, &g)| if o > 0.0 { g } else { 0.0 })
            .collect(),
    }
}

/// Undirected weighted edge between two node rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// `out_v = (1 + eps) h_v + sum over incident edges of w * h_u`, each edge
/// feeding both endpoints.
pub fn gin_aggregate(h: &Matrix, edges: &[WeightedEdge], eps: f64) -> Result<Matrix> {
    let n = h.rows;
    if let Some(e) = edges.iter().find(|e| e.a >= n || e.b >= n) {
        return Err(Error::contract(format!(
            "gin_aggregate: edge ({}, {}) outside {n} nodes",
            e.a, e.b
        )));
    }
    let d = h.cols;
    let mut out = h.clone();
    out.scale(1.0 + eps);
    for e in edges {
        if e.weight == 0.0 {
            continue;
        }
        for c in 0..d {
            let ha = h.data[e.a * d + c];
            let hb = h.data[e.b * d + c];
            out.data[e.a * d + c] += e.weight * hb;
            out.data[e.b * d + c] += e.weight * ha;
        }
    }
    Ok(out)
}

/// The aggregation matrix is symmetric, so its adjoint is itself.
pub fn gin_aggregate_backward(dout: &Matrix, edges: &[WeightedEdge], eps: f64) -> Result<Matrix> {
    gin_aggregate(dout, edges, eps)
}

/// Sum over groups of the mean row of each group. Empty groups add zero.
pub fn mean_readout(h: &Matrix, groups: &[&[usize]]) -> Result<Matrix> {
    let mut out = Matrix::zeros(1, h.cols);
    for g in groups {
        if g.is_empty() {
            continue;
        }
        let inv = 1.0 / g.len() as f64;
        for &v in *g {
            if v >= h.rows {
                return Err(Error::contract(format!("mean_readout: node {v} out of range")));
            }
            for (o, x) in out.data.iter_mut().zip(h.row(v)) {
                *o += inv * x;
            }
        }
    }
    Ok(out)
}

pub fn mean_readout_backward(dout: &Matrix, n_rows: usize, groups: &[&[usize]]) -> Matrix {
    let mut dh = Matrix::zeros(n_rows, dout.cols);
    for g in groups {
        if g.is_empty() {
            continue;
        }
        let inv = 1.0 / g.len() as f64;
        for &v in *g {
            for (o, x) in dh.row_mut(v).iter_mut().zip(&dout.data) {
                *o += inv * x;
            }
        }
    }
    dh
}

/// Mean of squared differences over every entry.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<f64> {
    if pred.shape() != target.shape() || pred.data.is_empty() {
        return Err(Error::contract(format!(
            "mse_loss: pred {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.data.len() as f64;
    Ok(pred
        .data
        .iter()
        .zip(&target.data)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

pub fn mse_loss_backward(pred: &Matrix, target: &Matrix) -> Matrix {
    let n = pred.data.len() as f64;
    Matrix {
        rows: pred.rows,
        cols: pred.cols,
        data: pred
            .data
            .iter()
            .zip(&target.data)
            .map(|(p, t)| 2.0 * (p - t) / n)
            .collect(),
    }
}

/// Rescales gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut Matrix], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.sum_squares()).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.scale(s);
        }
    }
    norm
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self {
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update of every parameter. `params` and `grads` must list the same
    /// tensors in the same order on every call.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[&Matrix]) -> Result<()> {
        if params.len() != grads.len()
            || params.iter().zip(grads).any(|(p, g)| p.shape() != g.shape())
        {
            return Err(Error::contract("adam: parameter/gradient shapes disagree"));
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Matrix::zeros(g.rows, g.cols)).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len()
            || self.m.iter().zip(grads).any(|(m, g)| m.shape() != g.shape())
        {
            return Err(Error::contract("adam: parameter set changed between steps"));
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.m[i].data;
            let v = &mut self.v[i].data;
            for (j, (w, &gj)) in p.data.iter_mut().zip(&g.data).enumerate() {
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Reduce-on-plateau learning-rate schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub best_val_loss: f64,
    pub epochs_since_improvement: u32,
    pub factor: f64,
    pub patience: u32,
    pub min_lr: f64,
    pub current_lr: f64,
}

impl PlateauScheduler {
    pub const FACTOR: f64 = 0.1;
    pub const PATIENCE: u32 = 3;
    pub const MIN_LR: f64 = 1e-4;

    pub fn new(initial_lr: f64) -> Self {
        Self {
            best_val_loss: f64::INFINITY,
            epochs_since_improvement: 0,
            factor: Self::FACTOR,
            patience: Self::PATIENCE,
            min_lr: Self::MIN_LR,
            current_lr: initial_lr,
        }
    }

    /// Records one epoch's validation loss and returns the learning rate for
    /// the next epoch.
    pub fn step(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best_val_loss {
            self.best_val_loss = val_loss;
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
            if self.epochs_since_improvement >= self.patience {
                self.current_lr = (self.current_lr * self.factor).max(self.min_lr);
                self.epochs_since_improvement = 0;
            }
        }
        self.current_lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn linear_examples() {
        let y = linear_forward(
            &m(&[&[1.0, 2.0]]),
            &m(&[&[1.0, 0.0], &[0.0, 1.0]]),
            &m(&[&[0.0, 0.0]]),
        )
        .unwrap();
        assert_eq!(y, m(&[&[1.0, 2.0]]));

        let y = linear_forward(&m(&[&[1.0, 1.0]]), &m(&[&[2.0], &[3.0]]), &m(&[&[1.0]])).unwrap();
        assert_eq!(y, m(&[&[6.0]]));

        let y = linear_forward(
            &Matrix::zeros(3, 2),
            &m(&[&[0.3, -1.0], &[7.0, 2.0]]),
            &m(&[&[5.0, 5.0]]),
        )
        .unwrap();
        assert!(y.data().iter().all(|&v| v == 5.0));

        assert!(linear_forward(&Matrix::zeros(1, 3), &Matrix::zeros(2, 2), &Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn gin_examples() {
        let h = m(&[&[4.0, -1.0]]);
        assert_eq!(gin_aggregate(&h, &[], 0.0).unwrap(), h);

        let h = m(&[&[1.0], &[2.0]]);
        let e = [WeightedEdge { a: 0, b: 1, weight: 1.0 }];
        assert_eq!(gin_aggregate(&h, &e, 0.0).unwrap(), m(&[&[3.0], &[3.0]]));

        let zero = [WeightedEdge { a: 0, b: 1, weight: 0.0 }];
        assert_eq!(
            gin_aggregate(&h, &zero, 0.0).unwrap(),
            gin_aggregate(&h, &[], 0.0).unwrap()
        );

        let bad = [WeightedEdge { a: 0, b: 2, weight: 1.0 }];
        assert!(gin_aggregate(&h, &bad, 0.0).is_err());
    }

    #[test]
    fn readout_examples() {
        let h = m(&[&[1.0, 3.0], &[3.0, 1.0]]);
        assert_eq!(mean_readout(&h, &[&[0, 1]]).unwrap(), m(&[&[2.0, 2.0]]));
        let h = m(&[&[2.0, 0.0], &[0.0, 4.0]]);
        assert_eq!(mean_readout(&h, &[&[0], &[1]]).unwrap(), m(&[&[2.0, 4.0]]));
        let z = Matrix::zeros(3, 2);
        assert_eq!(mean_readout(&z, &[&[0, 1], &[2], &[]]).unwrap(), Matrix::zeros(1, 2));
    }

    #[test]
    fn mse_examples() {
        let p = m(&[&[1.0, 0.0]]);
        assert_eq!(mse_loss(&p, &p).unwrap(), 0.0);
        assert_eq!(mse_loss(&p, &Matrix::zeros(1, 2)).unwrap(), 0.5);
        assert_eq!(
            mse_loss(&m(&[&[1.0, 1.0], &[0.0, 0.0]]), &Matrix::zeros(2, 2)).unwrap(),
            0.5
        );
        assert!(mse_loss(&p, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn scalar_mse_gradient_closed_form() {
        // L = (x w - y)^2 ; dL/dw = 2 (x w - y) x
        let (x, w, y) = (1.5, -0.7, 2.0);
        let layer = Linear {
            weight: m(&[&[w]]),
            bias: Matrix::zeros(1, 1),
        };
        let xm = m(&[&[x]]);
        let pred = layer.forward(&xm).unwrap();
        let dpred = mse_loss_backward(&pred, &m(&[&[y]]));
        let mut g = Linear::zeros(1, 1);
        layer.backward(&xm, &dpred, &mut g);
        assert!((g.weight.get(0, 0) - 2.0 * (x * w - y) * x).abs() < 1e-14);
        assert!((g.bias.get(0, 0) - 2.0 * (x * w - y)).abs() < 1e-14);
    }

    #[test]
    fn adam_zero_grad_and_first_step() {
        let mut p = m(&[&[0.5, -2.0]]);
        let before = p.clone();
        let mut st = AdamState::new(0.01);
        st.step(&mut [&mut p], &[&Matrix::zeros(1, 2)]).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.t, 1);

        let mut q = m(&[&[1.0]]);
        let mut st = AdamState::new(0.01);
        st.step(&mut [&mut q], &[&m(&[&[1.0]])]).unwrap();
        let expected = 1.0 - 0.01 / (1.0 + 1e-8);
        assert!((q.get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn adam_with_vanishing_lr_is_a_no_op() {
        let mut rng = crate::rng::seeded(4);
        let mut p = normal(3, 4, 0.1, &mut rng);
        let before = p.clone();
        let g = normal(3, 4, 1.0, &mut rng);
        let mut st = AdamState::new(1e-300);
        st.step(&mut [&mut p], &[&g]).unwrap();
        for (a, b) in p.data().iter().zip(before.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scheduler_examples() {
        let mut s = PlateauScheduler::new(0.01);
        for l in [5.0, 4.0, 3.0, 2.0, 1.0] {
            assert_eq!(s.step(l), 0.01);
        }

        let mut s = PlateauScheduler::new(0.01);
        assert_eq!(s.step(5.0), 0.01);
        assert_eq!(s.step(5.0), 0.01);
        assert_eq!(s.step(5.0), 0.01);
        assert!((s.step(5.0) - 0.001).abs() < 1e-15);

        let mut s = PlateauScheduler::new(1e-4);
        s.step(1.0);
        for _ in 0..3 {
            s.step(1.0);
        }
        assert_eq!(s.current_lr, 1e-4);
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut a = m(&[&[3.0]]);
        let mut b = m(&[&[4.0]]);
        let n = clip_global_norm(&mut [&mut a, &mut b], 1.0);
        assert_eq!(n, 5.0);
        assert!((a.get(0, 0) - 0.6).abs() < 1e-15 && (b.get(0, 0) - 0.8).abs() < 1e-15);
    }
}
