//! Polynomial graph-filter layers, `X' = sigma(sum_{r<R} S^r X Theta_r)`.
//! With `S = A` this is the FB-GCNN baseline; with the row-normalized
//! `A + I` and `R = 2` it is the GCN-style baseline.

use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView3, Axis};

use crate::dag::Dag;
use crate::error::{Error, Result};
use crate::nn::ops::{shared_matmul, shared_matmul_input_grad_acc, shared_matmul_weight_grad};
use crate::nn::{Activation, ParamTensor};
use crate::rng::Rng;
use crate::signal::SignalBatch;
use crate::sparse::SparseMatrix;

/// Which shift operator a polynomial filter uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsoKind {
    Adjacency,
    /// `D^{-1} (A + I)` with `D` the absolute row sums.
    NormalizedSelfLoops,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gso {
    pub kind: GsoKind,
    pub transposed: bool,
}

impl Gso {
    pub fn build(&self, dag: &Dag) -> SparseMatrix {
        let a = dag.adjacency();
        let s = match self.kind {
            GsoKind::Adjacency => a.clone(),
            GsoKind::NormalizedSelfLoops => {
                let n = a.n();
                let mut rowsum = vec![1.0; n];
                for (i, _, v) in a.triplets() {
                    rowsum[i] += v.abs();
                }
                SparseMatrix::from_triplets(
                    n,
                    a.triplets()
                        .map(|(i, j, v)| (i, j, v / rowsum[i]))
                        .chain((0..n).map(|i| (i, i, 1.0 / rowsum[i]))),
                )
            }
        };
        if self.transposed {
            s.transpose()
        } else {
            s
        }
    }
}

impl fmt::Display for Gso {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            GsoKind::Adjacency => "adjacency",
            GsoKind::NormalizedSelfLoops => "normalized",
        };
        write!(f, "{k}{}", if self.transposed { "-t" } else { "" })
    }
}

impl FromStr for Gso {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (base, transposed) = match s.strip_suffix("-t") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let kind = match base {
            "adjacency" => GsoKind::Adjacency,
            "normalized" => GsoKind::NormalizedSelfLoops,
            _ => return Err(Error::param(format!("unknown shift operator `{s}`"))),
        };
        Ok(Gso { kind, transposed })
    }
}

fn check(x: &SignalBatch, taps: ArrayView3<'_, f64>, s: &SparseMatrix) -> Result<()> {
    x.check_nodes(s.n())?;
    let (r, fi, _) = taps.dim();
    if r == 0 {
        return Err(Error::param("a polynomial filter needs at least one tap"));
    }
    if fi != x.n_features() {
        return Err(Error::shape(format!("taps expect {fi} input features, got {}", x.n_features())));
    }
    Ok(())
}

// Horner: X T_0 + S (X T_1 + S (X T_2 + ...)); powers of S never materialize.
fn linear_part(x: &SignalBatch, taps: ArrayView3<'_, f64>, s: &SparseMatrix) -> SignalBatch {
    let r = taps.dim().0;
    let mut acc = shared_matmul(x, taps.index_axis(Axis(0), r - 1));
    let mut tmp = acc.zeros_like();
    for q in (0..r - 1).rev() {
        let stride = acc.row_len();
        s.mul(acc.as_slice(), tmp.as_mut_slice(), stride);
        let term = shared_matmul(x, taps.index_axis(Axis(0), q));
        for ((a, t), p) in acc.as_mut_slice().iter_mut().zip(tmp.as_slice()).zip(term.as_slice()) {
            *a = t + p;
        }
    }
    acc
}

/// One FB-GCNN layer with taps `(R, F_in, F_out)` over the operator `s`.
pub fn fb_gcnn_layer(
    x: &SignalBatch,
    taps: ArrayView3<'_, f64>,
    s: &SparseMatrix,
    activation: Activation,
) -> Result<SignalBatch> {
    check(x, taps, s)?;
    let mut y = linear_part(x, taps, s);
    activation.apply(y.as_mut_slice());
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct FbLayer {
    pub(crate) gso: Gso,
    pub(crate) s: std::sync::Arc<SparseMatrix>,
    pub(crate) taps: ParamTensor,
    pub(crate) activation: Activation,
}

#[derive(Debug)]
pub struct FbCache {
    input: SignalBatch,
    out: SignalBatch,
}

impl FbLayer {
    pub fn new(
        gso: Gso,
        s: std::sync::Arc<SparseMatrix>,
        n_taps: usize,
        f_in: usize,
        f_out: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        let bound = 1.0 / ((n_taps * f_in) as f64).sqrt();
        let taps = ParamTensor::uniform(&[n_taps, f_in, f_out], bound, rng);
        Self { gso, s, taps, activation }
    }

    pub fn f_in(&self) -> usize {
        self.taps.shape()[1]
    }

    pub fn f_out(&self) -> usize {
        self.taps.shape()[2]
    }

    pub fn n_taps(&self) -> usize {
        self.taps.shape()[0]
    }

    pub fn forward(&self, x: &SignalBatch) -> Result<(SignalBatch, FbCache)> {
        check(x, self.taps.view3(), &self.s)?;
        let mut y = linear_part(x, self.taps.view3(), &self.s);
        self.activation.apply(y.as_mut_slice());
        Ok((y.clone(), FbCache { input: x.clone(), out: y }))
    }

    pub fn backward(&mut self, cache: FbCache, grad: &SignalBatch, need_input_grad: bool) -> Option<SignalBatch> {
        let mut g = grad.clone();
        self.activation.backward(g.as_mut_slice(), cache.out.as_slice());
        let r = self.n_taps();
        let taps = self.taps.view3().to_owned();
        let mut gx = need_input_grad.then(|| cache.input.zeros_like());
        let mut tmp = g.zeros_like();
        // g holds (S^T)^q dY at step q
        for q in 0..r {
            if q > 0 {
                let stride = g.row_len();
                self.s.mul_t(g.as_slice(), tmp.as_mut_slice(), stride);
                std::mem::swap(&mut g, &mut tmp);
            }
            let mut gt = self.taps.grad3_mut();
            shared_matmul_weight_grad(&cache.input, &g, gt.index_axis_mut(Axis(0), q));
            if let Some(gx) = gx.as_mut() {
                shared_matmul_input_grad_acc(&g, taps.index_axis(Axis(0), q), gx);
            }
        }
        gx
    }
}
