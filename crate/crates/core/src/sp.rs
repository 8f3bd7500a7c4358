//! Signal processing on DAGs.
//!
//! A signal `x` is generated by causes `c` through the weighted transitive
//! closure, `x = W c` with `W = (I - A)^{-1}`. Each node `k` induces a causal
//! shift `T_k = W D_k W^{-1}`, where `D_k` keeps the causes of the
//! predecessors of `k` (including `k`). The columns of `W` are a Fourier
//! basis shared by every shift, so a filter `H = sum_k h_k T_k` acts in the
//! spectral domain as the diagonal `sum_k h_k D_k`.
//!
//! Nothing here materializes `T_k`: every application is a product with
//! `I - A`, a diagonal mask and a triangular solve against `I - A`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use ndarray::Array2;
use rand::seq::index;

use crate::dag::Dag;
use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::signal::SignalBatch;
use crate::sparse::SparseMatrix;

/// Graphs up to this size keep a dense copy of `W`.
pub const DEFAULT_DENSE_LIMIT: usize = 2000;

/// The closure `W = (I - A)^{-1}` together with its exact inverse `I - A`.
#[derive(Debug, Clone)]
pub struct ClosurePair {
    adj: SparseMatrix,
    w: Option<Array2<f64>>,
}

pub fn transitive_closure(dag: &Dag) -> ClosurePair {
    transitive_closure_with_limit(dag, DEFAULT_DENSE_LIMIT)
}

/// Like [`transitive_closure`], but only materializes `W` when
/// `dag.n() <= dense_limit`. Above the limit `W` is applied by substitution.
pub fn transitive_closure_with_limit(dag: &Dag, dense_limit: usize) -> ClosurePair {
    let adj = dag.adjacency().clone();
    let w = (dag.n() <= dense_limit).then(|| solve_identity(&adj));
    ClosurePair { adj, w }
}

// Column-wise forward substitution of (I - A) W = I.
fn solve_identity(adj: &SparseMatrix) -> Array2<f64> {
    let n = adj.n();
    let mut w = Array2::<f64>::eye(n);
    adj.unit_minus_solve(w.as_slice_mut().unwrap(), n);
    w
}

impl ClosurePair {
    pub fn n(&self) -> usize {
        self.adj.n()
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adj
    }

    /// Dense `W`, if it was materialized.
    pub fn w(&self) -> Option<&Array2<f64>> {
        self.w.as_ref()
    }

    /// Dense `W`, computing it if needed.
    pub fn w_dense(&self) -> Array2<f64> {
        self.w.clone().unwrap_or_else(|| solve_identity(&self.adj))
    }

    /// Dense `W^{-1} = I - A`.
    pub fn winv_dense(&self) -> Array2<f64> {
        Array2::eye(self.n()) - self.adj.to_dense()
    }

    // Node-major slice kernels; `stride` is the row length.

    pub fn w_in_place(&self, x: &mut [f64], stride: usize) {
        self.adj.unit_minus_solve(x, stride);
    }

    pub fn w_t_in_place(&self, x: &mut [f64], stride: usize) {
        self.adj.unit_minus_solve_t(x, stride);
    }

    pub fn winv_into(&self, x: &[f64], out: &mut [f64], stride: usize) {
        self.adj.unit_minus_mul(x, out, stride);
    }

    pub fn winv_t_into(&self, x: &[f64], out: &mut [f64], stride: usize) {
        self.adj.unit_minus_mul_t(x, out, stride);
    }

    // Batch-level versions.

    pub fn apply_w(&self, x: &SignalBatch) -> Result<SignalBatch> {
        x.check_nodes(self.n())?;
        let mut out = x.clone();
        let stride = out.row_len();
        self.w_in_place(out.as_mut_slice(), stride);
        Ok(out)
    }

    pub fn apply_w_t(&self, x: &SignalBatch) -> Result<SignalBatch> {
        x.check_nodes(self.n())?;
        let mut out = x.clone();
        let stride = out.row_len();
        self.w_t_in_place(out.as_mut_slice(), stride);
        Ok(out)
    }

    pub fn apply_winv(&self, x: &SignalBatch) -> Result<SignalBatch> {
        x.check_nodes(self.n())?;
        let mut out = x.clone();
        let stride = out.row_len();
        self.winv_into(x.as_slice(), out.as_mut_slice(), stride);
        Ok(out)
    }

    pub fn apply_winv_t(&self, x: &SignalBatch) -> Result<SignalBatch> {
        x.check_nodes(self.n())?;
        let mut out = x.clone();
        let stride = out.row_len();
        self.winv_t_into(x.as_slice(), out.as_mut_slice(), stride);
        Ok(out)
    }
}

/// A set of causal shifts `{T_k : k in U}` with their predecessor masks.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalShiftSet {
    nodes: Vec<usize>,
    masks: Vec<Vec<bool>>,
    transposed: bool,
    // cover[i] = positions u in `nodes` whose mask contains i
    cover: Vec<Vec<usize>>,
}

impl CausalShiftSet {
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn masks(&self) -> &[Vec<bool>] {
        &self.masks
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_nodes(&self) -> usize {
        self.cover.len()
    }

    pub fn transposed(&self) -> bool {
        self.transposed
    }

    /// Same shifts, other direction.
    pub fn with_transposed(mut self, transposed: bool) -> Self {
        self.transposed = transposed;
        self
    }

    /// Position of node `k` in `U`.
    pub fn position(&self, k: usize) -> Option<usize> {
        self.nodes.iter().position(|&u| u == k)
    }

    /// Mask `d_k` of the shift at position `u`.
    pub fn mask(&self, u: usize) -> &[bool] {
        &self.masks[u]
    }

    /// Positions `u` whose mask contains node `i`, i.e. the shifts in `U`
    /// for which `i` is a predecessor.
    pub fn cover(&self, i: usize) -> &[usize] {
        &self.cover[i]
    }

    /// `sum_u h_u d_u`.
    pub fn aggregate(&self, coeffs: &[f64]) -> Vec<f64> {
        (0..self.n_nodes())
            .map(|i| self.cover[i].iter().map(|&u| coeffs[u]).sum())
            .collect()
    }
}

/// Predecessor indicators `d_k` (reflexive) for each `k` in `nodes`.
pub fn predecessor_masks(dag: &Dag, nodes: &[usize]) -> Result<CausalShiftSet> {
    let n = dag.n();
    if nodes.is_empty() {
        return Err(Error::param("shift set needs at least one node"));
    }
    let mut seen = BTreeSet::new();
    for &k in nodes {
        if k >= n {
            return Err(Error::param(format!("node {k} out of range for n = {n}")));
        }
        if !seen.insert(k) {
            return Err(Error::param(format!("node {k} listed twice")));
        }
    }
    let masks: Vec<Vec<bool>> = nodes.iter().map(|&k| ancestors(dag, k)).collect();
    let mut cover = vec![Vec::new(); n];
    for (u, m) in masks.iter().enumerate() {
        for (i, _) in m.iter().enumerate().filter(|(_, &b)| b) {
            cover[i].push(u);
        }
    }
    Ok(CausalShiftSet {
        nodes: nodes.to_vec(),
        masks,
        transposed: false,
        cover,
    })
}

// Reverse reachability from k; parents always have smaller storage index, so
// one descending sweep suffices.
fn ancestors(dag: &Dag, k: usize) -> Vec<bool> {
    let mut hit = vec![false; dag.n()];
    hit[k] = true;
    for i in (0..=k).rev() {
        if hit[i] {
            for &j in dag.parents(i).0 {
                hit[j] = true;
            }
        }
    }
    hit
}

/// Every node as a shift.
pub fn all_shifts(dag: &Dag) -> CausalShiftSet {
    predecessor_masks(dag, &(0..dag.n()).collect::<Vec<_>>()).expect("valid nodes")
}

/// `size` distinct nodes drawn uniformly without replacement, sorted.
pub fn random_subset(n: usize, size: usize, seed: u64) -> Result<Vec<usize>> {
    if size == 0 || size > n {
        return Err(Error::param(format!("cannot draw {size} of {n} nodes")));
    }
    let mut v = index::sample(&mut rng_from(seed), n, size).into_vec();
    v.sort_unstable();
    Ok(v)
}

fn scale_rows(x: &mut [f64], stride: usize, r: &[f64]) {
    for (row, &s) in x.chunks_exact_mut(stride).zip(r) {
        if s == 0.0 {
            row.fill(0.0);
        } else if s != 1.0 {
            row.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Applies the spectral diagonal `r` between the two triangular products:
/// `W diag(r) (I - A) x`, or `(I - A)^T diag(r) W^T x` when transposed.
pub fn apply_spectral(
    closure: &ClosurePair,
    response: &[f64],
    transposed: bool,
    x: &SignalBatch,
) -> Result<SignalBatch> {
    x.check_nodes(closure.n())?;
    if response.len() != closure.n() {
        return Err(Error::shape(format!(
            "response has {} entries for {} nodes",
            response.len(),
            closure.n()
        )));
    }
    let stride = x.row_len();
    if transposed {
        let mut tmp = x.clone();
        closure.w_t_in_place(tmp.as_mut_slice(), stride);
        scale_rows(tmp.as_mut_slice(), stride, response);
        let mut out = x.zeros_like();
        closure.winv_t_into(tmp.as_slice(), out.as_mut_slice(), stride);
        Ok(out)
    } else {
        let mut out = x.zeros_like();
        closure.winv_into(x.as_slice(), out.as_mut_slice(), stride);
        scale_rows(out.as_mut_slice(), stride, response);
        closure.w_in_place(out.as_mut_slice(), stride);
        Ok(out)
    }
}

/// `T_k x` (or `T_k^T x` for a transposed shift set).
pub fn apply_shift(
    closure: &ClosurePair,
    shifts: &CausalShiftSet,
    k: usize,
    x: &SignalBatch,
) -> Result<SignalBatch> {
    let u = shifts
        .position(k)
        .ok_or_else(|| Error::param(format!("node {k} is not in the shift set")))?;
    if shifts.n_nodes() != closure.n() {
        return Err(Error::shape("shift set and closure disagree on node count"));
    }
    let r: Vec<f64> = shifts.mask(u).iter().map(|&b| b as u8 as f64).collect();
    apply_spectral(closure, &r, shifts.transposed(), x)
}

/// `H = sum_{k in U} h_k T_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DagFilter {
    shifts: CausalShiftSet,
    coeffs: Vec<f64>,
}

impl DagFilter {
    pub fn new(shifts: CausalShiftSet, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != shifts.len() {
            return Err(Error::shape(format!(
                "{} coefficients for {} shifts",
                coeffs.len(),
                shifts.len()
            )));
        }
        Ok(Self { shifts, coeffs })
    }

    pub fn shifts(&self) -> &CausalShiftSet {
        &self.shifts
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// One `k h_k` line per shift.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, h) in self.shifts.nodes().iter().zip(&self.coeffs) {
            let _ = writeln!(s, "{k} {h:?}");
        }
        s
    }

    pub fn from_text(dag: &Dag, text: &str, transposed: bool) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut coeffs = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| Error::Parse { line: ln + 1, msg };
            let parts: Vec<_> = line.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(bad(format!("expected `k h_k`, got `{line}`")));
            }
            nodes.push(parts[0].parse::<usize>().map_err(|e| bad(e.to_string()))?);
            coeffs.push(parts[1].parse::<f64>().map_err(|e| bad(e.to_string()))?);
        }
        let shifts = predecessor_masks(dag, &nodes)?.with_transposed(transposed);
        Self::new(shifts, coeffs)
    }
}

/// `sum_k h_k T_k x` in a single spectral pass.
pub fn apply_filter(filter: &DagFilter, closure: &ClosurePair, x: &SignalBatch) -> Result<SignalBatch> {
    if filter.shifts.n_nodes() != closure.n() {
        return Err(Error::shape("filter and closure disagree on node count"));
    }
    let r = frequency_response(filter);
    apply_spectral(closure, &r, filter.shifts.transposed(), x)
}

/// Spectral coefficients (causes) `c = (I - A) x`.
pub fn fourier(closure: &ClosurePair, x: &SignalBatch) -> Result<SignalBatch> {
    closure.apply_winv(x)
}

/// `x = W c`.
pub fn inverse_fourier(closure: &ClosurePair, c: &SignalBatch) -> Result<SignalBatch> {
    closure.apply_w(c)
}

/// Diagonal of `sum_k h_k D_k`.
pub fn frequency_response(filter: &DagFilter) -> Vec<f64> {
    filter.shifts.aggregate(&filter.coeffs)
}
