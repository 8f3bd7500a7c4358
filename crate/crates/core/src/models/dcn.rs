//! DAG convolution: `X' = sigma(sum_{k in U} T_k X Theta_k)`.
//!
//! With `T_k = W D_k (I - A)` the sum folds into a single spectral pass,
//!
//! ```text
//! sum_k T_k X Theta_k = W [ row i: ((I - A) X)_i * Phi_i ],
//! Phi_i = sum_{k in U, i <= k} Theta_k,
//! ```
//!
//! so one layer costs two sparse triangular products plus one small matrix
//! product per node, whatever `|U|` is. The transposed variant swaps in
//! `T_k^T = (I - A)^T D_k W^T`.

use std::sync::Arc;

use ndarray::ArrayView3;

use crate::error::{Error, Result};
use crate::nn::ops::{per_node_matmul, per_node_matmul_input_grad, per_node_matmul_weight_grad};
use crate::nn::{Activation, ParamTensor};
use crate::rng::Rng;
use crate::signal::SignalBatch;
use crate::sp::{CausalShiftSet, ClosurePair};

// Phi_i = sum of the bank matrices whose shift covers node i, flattened
// back to back.
fn aggregate_bank(shifts: &CausalShiftSet, bank: &[f64], block: usize) -> Vec<f64> {
    let mut phi = vec![0.0; shifts.n_nodes() * block];
    for (i, dst) in phi.chunks_exact_mut(block).enumerate() {
        for &u in shifts.cover(i) {
            for (d, b) in dst.iter_mut().zip(&bank[u * block..(u + 1) * block]) {
                *d += b;
            }
        }
    }
    phi
}

fn check(x: &SignalBatch, closure: &ClosurePair, shifts: &CausalShiftSet, bank: ArrayView3<'_, f64>) -> Result<()> {
    x.check_nodes(closure.n())?;
    if shifts.n_nodes() != closure.n() {
        return Err(Error::shape("shift set and closure disagree on node count"));
    }
    let (u, fi, _) = bank.dim();
    if u != shifts.len() {
        return Err(Error::shape(format!("bank has {u} matrices for {} shifts", shifts.len())));
    }
    if fi != x.n_features() {
        return Err(Error::shape(format!("bank expects {fi} input features, got {}", x.n_features())));
    }
    Ok(())
}

// Returns (pre-activation output, causes, aggregated weights).
fn linear_part(
    x: &SignalBatch,
    closure: &ClosurePair,
    shifts: &CausalShiftSet,
    bank: ArrayView3<'_, f64>,
) -> (SignalBatch, SignalBatch, Vec<f64>) {
    let (_, fi, f_out) = bank.dim();
    let phi = match bank.as_slice() {
        Some(b) => aggregate_bank(shifts, b, fi * f_out),
        None => aggregate_bank(shifts, &bank.iter().copied().collect::<Vec<_>>(), fi * f_out),
    };
    let stride = x.row_len();
    if shifts.transposed() {
        let mut c = x.clone();
        closure.w_t_in_place(c.as_mut_slice(), stride);
        let z = per_node_matmul(&c, &phi, f_out);
        let mut p = z.zeros_like();
        closure.winv_t_into(z.as_slice(), p.as_mut_slice(), z.row_len());
        (p, c, phi)
    } else {
        let mut c = x.zeros_like();
        closure.winv_into(x.as_slice(), c.as_mut_slice(), stride);
        let mut p = per_node_matmul(&c, &phi, f_out);
        let s = p.row_len();
        closure.w_in_place(p.as_mut_slice(), s);
        (p, c, phi)
    }
}

/// One DCN layer applied to `x` with the coefficient bank `(|U|, F_in, F_out)`.
pub fn dcn_layer(
    x: &SignalBatch,
    bank: ArrayView3<'_, f64>,
    shifts: &CausalShiftSet,
    closure: &ClosurePair,
    activation: Activation,
) -> Result<SignalBatch> {
    check(x, closure, shifts, bank)?;
    let (mut y, _, _) = linear_part(x, closure, shifts, bank);
    activation.apply(y.as_mut_slice());
    Ok(y)
}

/// Single-feature DCN layer: `sigma(sum_k h_k T_k x)`.
pub fn dag_perceptron(
    x: &SignalBatch,
    h: &[f64],
    shifts: &CausalShiftSet,
    closure: &ClosurePair,
    activation: Activation,
) -> Result<SignalBatch> {
    if x.n_features() != 1 {
        return Err(Error::shape("the DAG perceptron takes single-feature signals"));
    }
    let bank = ArrayView3::from_shape((h.len(), 1, 1), h)
        .map_err(|e| Error::shape(e.to_string()))?;
    dcn_layer(x, bank, shifts, closure, activation)
}

#[derive(Debug, Clone)]
pub struct DcnLayer {
    pub(crate) closure: Arc<ClosurePair>,
    pub(crate) shifts: Arc<CausalShiftSet>,
    pub(crate) bank: ParamTensor,
    pub(crate) activation: Activation,
}

#[derive(Debug)]
pub struct DcnCache {
    causes: SignalBatch,
    phi: Vec<f64>,
    out: SignalBatch,
}

impl DcnLayer {
    /// Bank entries uniform in `(-a, a)`, `a = 1 / sqrt(|U| F_in)`.
    pub fn new(
        closure: Arc<ClosurePair>,
        shifts: Arc<CausalShiftSet>,
        f_in: usize,
        f_out: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        let bound = 1.0 / ((shifts.len() * f_in) as f64).sqrt();
        let bank = ParamTensor::uniform(&[shifts.len(), f_in, f_out], bound, rng);
        Self { closure, shifts, bank, activation }
    }

    pub fn with_bank(
        closure: Arc<ClosurePair>,
        shifts: Arc<CausalShiftSet>,
        bank: ParamTensor,
        activation: Activation,
    ) -> Result<Self> {
        if bank.shape().len() != 3 || bank.shape()[0] != shifts.len() {
            return Err(Error::shape(format!(
                "bank shape {:?} does not fit {} shifts",
                bank.shape(),
                shifts.len()
            )));
        }
        Ok(Self { closure, shifts, bank, activation })
    }

    pub fn f_in(&self) -> usize {
        self.bank.shape()[1]
    }

    pub fn f_out(&self) -> usize {
        self.bank.shape()[2]
    }

    pub fn shifts(&self) -> &CausalShiftSet {
        &self.shifts
    }

    pub fn bank(&self) -> &ParamTensor {
        &self.bank
    }

    pub fn forward(&self, x: &SignalBatch) -> Result<(SignalBatch, DcnCache)> {
        check(x, &self.closure, &self.shifts, self.bank.view3())?;
        let (mut y, causes, phi) = linear_part(x, &self.closure, &self.shifts, self.bank.view3());
        self.activation.apply(y.as_mut_slice());
        Ok((y.clone(), DcnCache { causes, phi, out: y }))
    }

    pub fn backward(&mut self, cache: DcnCache, grad: &SignalBatch, need_input_grad: bool) -> Option<SignalBatch> {
        let mut g = grad.clone();
        self.activation.backward(g.as_mut_slice(), cache.out.as_slice());
        let stride = g.row_len();
        // gradient with respect to the per-node product Z = C Phi
        let gz = if self.shifts.transposed() {
            let mut gz = g.zeros_like();
            self.closure.winv_into(g.as_slice(), gz.as_mut_slice(), stride);
            gz
        } else {
            self.closure.w_t_in_place(g.as_mut_slice(), stride);
            g
        };
        let (fi, fo) = (self.f_in(), self.f_out());
        let block = fi * fo;
        let mut gphi = vec![0.0; self.shifts.n_nodes() * block];
        per_node_matmul_weight_grad(&cache.causes, &gz, &mut gphi);
        let gbank = self.bank.grad_mut();
        for (i, gp) in gphi.chunks_exact(block).enumerate() {
            for &u in self.shifts.cover(i) {
                for (d, v) in gbank[u * block..(u + 1) * block].iter_mut().zip(gp) {
                    *d += v;
                }
            }
        }
        if !need_input_grad {
            return None;
        }
        let gc = per_node_matmul_input_grad(&gz, &cache.phi, fi);
        let s = gc.row_len();
        Some(if self.shifts.transposed() {
            let mut gx = gc;
            self.closure.w_in_place(gx.as_mut_slice(), s);
            gx
        } else {
            let mut gx = gc.zeros_like();
            self.closure.winv_t_into(gc.as_slice(), gx.as_mut_slice(), s);
            gx
        })
    }
}
