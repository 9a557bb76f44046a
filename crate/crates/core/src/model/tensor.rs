//! Row-major dense matrices and the handful of kernels the network needs.
//! Linear layers use the row-vector convention `y = x W + b`, with `W` stored
//! as `in x out`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// `x (n x in) · w (in x out) [+ b]`.
pub fn linear(x: &[f64], n: usize, w: &Mat, b: Option<&Mat>) -> Vec<f64> {
    let (din, dout) = (w.rows, w.cols);
    debug_assert_eq!(x.len(), n * din);
    let mut y = vec![0.0; n * dout];
    for r in 0..n {
        let yr = &mut y[r * dout..(r + 1) * dout];
        if let Some(b) = b {
            yr.copy_from_slice(&b.data);
        }
        for (k, &xv) in x[r * din..(r + 1) * din].iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for (yv, &wv) in yr.iter_mut().zip(w.row(k)) {
                *yv += xv * wv;
            }
        }
    }
    y
}

/// Accumulates gradients of `y = x w + b` given `dy`: `dw += xᵀdy`, `db += Σdy`,
/// and `dx += dy wᵀ` when `dx` is supplied.
pub fn linear_backward(x: &[f64], n: usize, w: &Mat, dy: &[f64], dw: &mut Mat, db: Option<&mut Mat>, dx: Option<&mut [f64]>) {
    let (din, dout) = (w.rows, w.cols);
    for r in 0..n {
        let dyr = &dy[r * dout..(r + 1) * dout];
        if dyr.iter().all(|&v| v == 0.0) {
            continue;
        }
        for (k, &xv) in x[r * din..(r + 1) * din].iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for (g, &d) in dw.row_mut(k).iter_mut().zip(dyr) {
                *g += xv * d;
            }
        }
    }
    if let Some(db) = db {
        for r in 0..n {
            for (g, &d) in db.data.iter_mut().zip(&dy[r * dout..(r + 1) * dout]) {
                *g += d;
            }
        }
    }
    if let Some(dx) = dx {
        for r in 0..n {
            let dyr = &dy[r * dout..(r + 1) * dout];
            for k in 0..din {
                let s: f64 = w.row(k).iter().zip(dyr).map(|(a, b)| a * b).sum();
                dx[r * din + k] += s;
            }
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

pub fn silu_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

/// Row-wise RMS normalization with a learned gain. Returns the output and the
/// per-row inverse RMS.
pub fn rmsnorm(x: &[f64], n: usize, gain: &Mat, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let d = gain.cols;
    let mut y = vec![0.0; n * d];
    let mut inv = vec![0.0; n];
    for r in 0..n {
        let xr = &x[r * d..(r + 1) * d];
        let ms = xr.iter().map(|v| v * v).sum::<f64>() / d as f64;
        let ir = 1.0 / (ms + eps).sqrt();
        inv[r] = ir;
        for ((yv, &xv), &g) in y[r * d..(r + 1) * d].iter_mut().zip(xr).zip(&gain.data) {
            *yv = xv * ir * g;
        }
    }
    (y, inv)
}

/// Backward of [`rmsnorm`]: accumulates into `dgain` and returns `dx`.
pub fn rmsnorm_backward(x: &[f64], n: usize, gain: &Mat, inv: &[f64], dy: &[f64], dgain: &mut Mat) -> Vec<f64> {
    let d = gain.cols;
    let mut dx = vec![0.0; n * d];
    for r in 0..n {
        let xr = &x[r * d..(r + 1) * d];
        let dyr = &dy[r * d..(r + 1) * d];
        let ir = inv[r];
        let mut dot = 0.0;
        for j in 0..d {
            let xhat = xr[j] * ir;
            dgain.data[j] += dyr[j] * xhat;
            dot += dyr[j] * gain.data[j] * xhat;
        }
        let mean = dot / d as f64;
        for j in 0..d {
            let xhat = xr[j] * ir;
            dx[r * d + j] = ir * (dyr[j] * gain.data[j] - xhat * mean);
        }
    }
    dx
}
