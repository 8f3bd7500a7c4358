//! Row-compressed sparse matrices and the triangular kernels used by every
//! shift operator.
//!
//! All kernels act on *node-major* buffers: a buffer of `n * stride` values
//! whose row `i` (a contiguous slice of length `stride`) holds everything
//! attached to node `i` (all samples, all features). Multiplying by an
//! `n x n` matrix then reduces to axpy operations on whole rows.

use ndarray::Array2;

/// Square sparse matrix in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl SparseMatrix {
    /// Builds the matrix from `(row, col, value)` triplets. Zero values are
    /// dropped; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) out of range for n = {n}");
            if v != 0.0 {
                rows[i].push((j, v));
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for (j, v) in row {
                if last == Some(j) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(j);
                    vals.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn from_dense(a: &Array2<f64>) -> Self {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "matrix must be square");
        Self::from_triplets(n, a.indexed_iter().map(|((i, j), &v)| (i, j, v)))
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_triplets(n, std::iter::empty())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|p| vals[p]).unwrap_or(0.0)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &w)| (i, j, w))
        })
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for (i, j, v) in self.triplets() {
            out[(i, j)] = v;
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.n, self.triplets().map(|(i, j, v)| (j, i, v)))
    }

    pub fn is_strictly_lower(&self) -> bool {
        self.triplets().all(|(i, j, _)| j < i)
    }

    /// `out = S x`.
    pub fn mul(&self, x: &[f64], out: &mut [f64], stride: usize) {
        debug_assert_eq!(x.len(), self.n * stride);
        debug_assert_eq!(out.len(), self.n * stride);
        out.fill(0.0);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let dst = &mut out[i * stride..(i + 1) * stride];
            for (&j, &a) in cols.iter().zip(vals) {
                axpy(a, &x[j * stride..(j + 1) * stride], dst);
            }
        }
    }

    /// `out = S^T x`.
    pub fn mul_t(&self, x: &[f64], out: &mut [f64], stride: usize) {
        debug_assert_eq!(x.len(), self.n * stride);
        debug_assert_eq!(out.len(), self.n * stride);
        out.fill(0.0);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let src = &x[i * stride..(i + 1) * stride];
            for (&j, &a) in cols.iter().zip(vals) {
                axpy(a, src, &mut out[j * stride..(j + 1) * stride]);
            }
        }
    }

    // The four kernels below treat `self` as the strictly lower-triangular
    // adjacency `A` of a DAG and act with `I - A` or its inverse.

    /// `out = (I - A) x`.
    pub fn unit_minus_mul(&self, x: &[f64], out: &mut [f64], stride: usize) {
        debug_assert!(self.is_strictly_lower());
        out.copy_from_slice(x);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let dst = &mut out[i * stride..(i + 1) * stride];
            for (&j, &a) in cols.iter().zip(vals) {
                axpy(-a, &x[j * stride..(j + 1) * stride], dst);
            }
        }
    }

    /// `out = (I - A)^T x`.
    pub fn unit_minus_mul_t(&self, x: &[f64], out: &mut [f64], stride: usize) {
        debug_assert!(self.is_strictly_lower());
        out.copy_from_slice(x);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let src = &x[i * stride..(i + 1) * stride];
            for (&j, &a) in cols.iter().zip(vals) {
                axpy(-a, src, &mut out[j * stride..(j + 1) * stride]);
            }
        }
    }

    /// In place `x <- (I - A)^{-1} x` by forward substitution.
    pub fn unit_minus_solve(&self, x: &mut [f64], stride: usize) {
        debug_assert!(self.is_strictly_lower());
        debug_assert_eq!(x.len(), self.n * stride);
        for i in 1..self.n {
            let (cols, vals) = self.row(i);
            if cols.is_empty() {
                continue;
            }
            let (done, rest) = x.split_at_mut(i * stride);
            let dst = &mut rest[..stride];
            for (&j, &a) in cols.iter().zip(vals) {
                axpy(a, &done[j * stride..(j + 1) * stride], dst);
            }
        }
    }

    /// In place `x <- (I - A)^{-T} x` by backward substitution.
    pub fn unit_minus_solve_t(&self, x: &mut [f64], stride: usize) {
        debug_assert!(self.is_strictly_lower());
        debug_assert_eq!(x.len(), self.n * stride);
        for i in (1..self.n).rev() {
            let (cols, vals) = self.row(i);
            if cols.is_empty() {
                continue;
            }
            // Row i is final once every successor has been folded into it.
            let (head, rest) = x.split_at_mut(i * stride);
            let src = &rest[..stride];
            for (&j, &a) in cols.iter().zip(vals) {
                axpy(a, src, &mut head[j * stride..(j + 1) * stride]);
            }
        }
    }
}
