//! Batches of multi-feature graph signals.

use ndarray::{s, Array2, Array3, ArrayView2, Axis};

use crate::error::{Error, Result};

/// `M` samples of an `N x F` node-feature matrix.
///
/// Storage is node-major, shape `(N, M, F)`: everything attached to one node
/// is contiguous, so shift operators act on whole rows at once. Use
/// [`SignalBatch::from_samples`] / [`SignalBatch::sample`] to move between
/// this layout and per-sample matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBatch {
    data: Array3<f64>,
    mask: Option<Vec<bool>>,
}

impl SignalBatch {
    pub fn zeros(n_nodes: usize, n_samples: usize, n_features: usize) -> Self {
        Self {
            data: Array3::zeros((n_nodes, n_samples, n_features)),
            mask: None,
        }
    }

    /// Wraps a node-major `(N, M, F)` array.
    pub fn from_node_major(data: Array3<f64>) -> Self {
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().into_owned()
        };
        Self { data, mask: None }
    }

    /// Builds a batch from an `(M, N, F)` array.
    pub fn from_sample_major(data: Array3<f64>) -> Self {
        Self::from_node_major(data.permuted_axes([1, 0, 2]))
    }

    /// Builds a batch from per-sample `N x F` matrices.
    pub fn from_samples(samples: &[Array2<f64>]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::shape("batch needs at least one sample"))?;
        let (n, f) = first.dim();
        let mut out = Self::zeros(n, samples.len(), f);
        for (m, x) in samples.iter().enumerate() {
            if x.dim() != (n, f) {
                return Err(Error::shape(format!(
                    "sample {m} is {:?}, expected {:?}",
                    x.dim(),
                    (n, f)
                )));
            }
            out.data.slice_mut(s![.., m, ..]).assign(x);
        }
        Ok(out)
    }

    /// Single-feature batch from per-sample vectors.
    pub fn from_vectors(samples: &[Vec<f64>]) -> Result<Self> {
        let mats: Vec<Array2<f64>> = samples
            .iter()
            .map(|v| Array2::from_shape_vec((v.len(), 1), v.clone()).unwrap())
            .collect();
        Self::from_samples(&mats)
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.n_nodes() {
            return Err(Error::shape(format!(
                "mask has {} entries for {} nodes",
                mask.len(),
                self.n_nodes()
            )));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn n_nodes(&self) -> usize {
        self.data.dim().0
    }

    pub fn n_samples(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_features(&self) -> usize {
        self.data.dim().2
    }

    /// Values per node row (`M * F`).
    pub fn row_len(&self) -> usize {
        self.n_samples() * self.n_features()
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<f64> {
        &mut self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice().expect("standard layout")
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.data.as_slice_mut().expect("standard layout")
    }

    /// The `M x F` block of node `i`.
    pub fn node(&self, i: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(0), i)
    }

    /// Sample `m` as an `N x F` matrix.
    pub fn sample(&self, m: usize) -> Array2<f64> {
        self.data.slice(s![.., m, ..]).to_owned()
    }

    pub fn get(&self, sample: usize, node: usize, feature: usize) -> f64 {
        self.data[(node, sample, feature)]
    }

    /// `(M, N, F)` copy.
    pub fn to_sample_major(&self) -> Array3<f64> {
        self.data.view().permuted_axes([1, 0, 2]).as_standard_layout().into_owned()
    }

    /// Sub-batch with the given samples, in the given order.
    pub fn select_samples(&self, idx: &[usize]) -> Self {
        let mut out = Self::from_node_major(self.data.select(Axis(1), idx));
        out.mask = self.mask.clone();
        out
    }

    /// Same layout, same shape, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.n_nodes(), self.n_samples(), self.n_features())
    }

    pub fn check_nodes(&self, n: usize) -> Result<()> {
        if self.n_nodes() != n {
            return Err(Error::shape(format!(
                "signal has {} nodes, graph has {n}",
                self.n_nodes()
            )));
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.data.dim() != other.data.dim() {
            return Err(Error::shape(format!(
                "batches have shapes {:?} and {:?}",
                self.data.dim(),
                other.data.dim()
            )));
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|v| v.is_finite())
    }
}
