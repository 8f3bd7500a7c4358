//! Differentiable primitives with closed-form adjoints.
//!
//! Triangular products live on [`ClosurePair`](crate::sp::ClosurePair) and
//! [`SparseMatrix`](crate::sparse::SparseMatrix); their adjoints are the
//! transposed kernels. This module holds the rest: node-wise matrix
//! products, activations and the dense affine map.

use std::fmt;
use std::str::FromStr;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2};

use crate::error::Error;
use crate::sparse::axpy;
use crate::signal::SignalBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    pub fn apply(self, x: &mut [f64]) {
        if self == Activation::Relu {
            x.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }

    /// Multiplies `grad` by the derivative, given the activation output.
    pub fn backward(self, grad: &mut [f64], out: &[f64]) {
        if self == Activation::Relu {
            for (g, &y) in grad.iter_mut().zip(out) {
                if y <= 0.0 {
                    *g = 0.0;
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "identity" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            _ => Err(Error::Param(format!("unknown activation `{s}`"))),
        }
    }
}

fn flat(x: &SignalBatch) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((x.n_nodes() * x.n_samples(), x.n_features()), x.as_slice()).unwrap()
}

fn flat_mut(x: &mut SignalBatch) -> ArrayViewMut2<'_, f64> {
    let shape = (x.n_nodes() * x.n_samples(), x.n_features());
    ArrayViewMut2::from_shape(shape, x.as_mut_slice()).unwrap()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out[i] = x[i] * w_i` with a separate `F_in x F_out` matrix per node,
/// stored back to back (row-major) in `weights`.
pub fn per_node_matmul(x: &SignalBatch, weights: &[f64], f_out: usize) -> SignalBatch {
    let (n, m, fi) = (x.n_nodes(), x.n_samples(), x.n_features());
    let block = fi * f_out;
    debug_assert_eq!(weights.len(), n * block);
    let mut out = SignalBatch::zeros(n, m, f_out);
    let rows_in = x.as_slice().chunks_exact(fi);
    let rows_out = out.as_mut_slice().chunks_exact_mut(f_out);
    for (r, (xr, or)) in rows_in.zip(rows_out).enumerate() {
        let w = &weights[(r / m) * block..(r / m + 1) * block];
        if f_out == 1 {
            or[0] = dot(xr, w);
            continue;
        }
        for (q, &a) in xr.iter().enumerate() {
            if a != 0.0 {
                axpy(a, &w[q * f_out..(q + 1) * f_out], or);
            }
        }
    }
    out
}

/// Adjoint of [`per_node_matmul`] with respect to the weights:
/// `gw_i += x[i]^T g[i]`.
pub fn per_node_matmul_weight_grad(x: &SignalBatch, g: &SignalBatch, gw: &mut [f64]) {
    let (m, fi, fo) = (x.n_samples(), x.n_features(), g.n_features());
    let block = fi * fo;
    for (r, (xr, gr)) in x.as_slice().chunks_exact(fi).zip(g.as_slice().chunks_exact(fo)).enumerate() {
        let w = &mut gw[(r / m) * block..(r / m + 1) * block];
        for (q, &a) in xr.iter().enumerate() {
            if a != 0.0 {
                axpy(a, gr, &mut w[q * fo..(q + 1) * fo]);
            }
        }
    }
}

/// Adjoint of [`per_node_matmul`] with respect to the input:
/// `gx[i] = g[i] w_i^T`.
pub fn per_node_matmul_input_grad(g: &SignalBatch, weights: &[f64], f_in: usize) -> SignalBatch {
    let (n, m, fo) = (g.n_nodes(), g.n_samples(), g.n_features());
    let block = f_in * fo;
    let mut gx = SignalBatch::zeros(n, m, f_in);
    let rows_g = g.as_slice().chunks_exact(fo);
    let rows_x = gx.as_mut_slice().chunks_exact_mut(f_in);
    for (r, (gr, xr)) in rows_g.zip(rows_x).enumerate() {
        let w = &weights[(r / m) * block..(r / m + 1) * block];
        for (q, v) in xr.iter_mut().enumerate() {
            *v = dot(gr, &w[q * fo..(q + 1) * fo]);
        }
    }
    gx
}

/// `out = x * theta` with one matrix shared by every node.
pub fn shared_matmul(x: &SignalBatch, theta: ArrayView2<'_, f64>) -> SignalBatch {
    let mut out = SignalBatch::zeros(x.n_nodes(), x.n_samples(), theta.ncols());
    general_mat_mul(1.0, &flat(x), &theta, 0.0, &mut flat_mut(&mut out));
    out
}

/// `gtheta += x^T g` over all nodes and samples.
pub fn shared_matmul_weight_grad(x: &SignalBatch, g: &SignalBatch, mut gtheta: ArrayViewMut2<'_, f64>) {
    general_mat_mul(1.0, &flat(x).t(), &flat(g), 1.0, &mut gtheta);
}

/// `gx += g theta^T`.
pub fn shared_matmul_input_grad_acc(g: &SignalBatch, theta: ArrayView2<'_, f64>, gx: &mut SignalBatch) {
    general_mat_mul(1.0, &flat(g), &theta.t(), 1.0, &mut flat_mut(gx));
}

/// Dense affine map `Y = X W + b` on row-major samples.
pub fn affine(x: &Array2<f64>, w: ArrayView2<'_, f64>, b: &[f64]) -> Array2<f64> {
    let mut y = Array2::from_shape_fn((x.nrows(), w.ncols()), |(_, j)| b[j]);
    general_mat_mul(1.0, x, &w, 1.0, &mut y);
    y
}

/// Gradients of [`affine`]: accumulates into `gw`, `gb` and returns `gx`.
pub fn affine_backward(
    x: &Array2<f64>,
    w: ArrayView2<'_, f64>,
    g: &Array2<f64>,
    mut gw: ArrayViewMut2<'_, f64>,
    gb: &mut [f64],
) -> Array2<f64> {
    general_mat_mul(1.0, &x.t(), g, 1.0, &mut gw);
    for row in g.rows() {
        for (acc, v) in gb.iter_mut().zip(row) {
            *acc += v;
        }
    }
    g.dot(&w.t())
}
