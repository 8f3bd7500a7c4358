//! Least-squares estimate of filter coefficients from input/output pairs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::signal::SignalBatch;
use crate::sp::{apply_filter, apply_shift, CausalShiftSet, ClosurePair, DagFilter};

// Pivots below this fraction of the largest diagonal entry count as zero.
const PIVOT_TOL: f64 = 1e-12;

/// Fitted coefficients over a fixed support; predicting applies the filter.
#[derive(Debug, Clone, PartialEq)]
pub struct LsFilterFit {
    filter: DagFilter,
    ridge: f64,
}

impl LsFilterFit {
    /// Wraps known coefficients, e.g. loaded from disk.
    pub fn from_filter(filter: DagFilter, ridge: f64) -> Self {
        Self { filter, ridge }
    }

    pub fn support(&self) -> &[usize] {
        self.filter.shifts().nodes()
    }

    pub fn h_hat(&self) -> &[f64] {
        self.filter.coeffs()
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn filter(&self) -> &DagFilter {
        &self.filter
    }
}

/// Solves `min_h sum_m ||y_m - sum_k h_k T_k x_m||^2 + ridge ||h||^2` over
/// the shifts in `support`.
pub fn ls_fit(
    closure: &ClosurePair,
    support: &CausalShiftSet,
    inputs: &SignalBatch,
    outputs: &SignalBatch,
    ridge: f64,
) -> Result<LsFilterFit> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::param(format!("ridge must be nonnegative, got {ridge}")));
    }
    inputs.same_shape(outputs)?;
    inputs.check_nodes(closure.n())?;
    if inputs.n_features() != 1 {
        return Err(Error::shape("least squares works on single-feature signals"));
    }
    let p = support.len();
    if inputs.n_samples() < p {
        return Err(Error::param(format!(
            "{} samples cannot determine {p} coefficients",
            inputs.n_samples()
        )));
    }
    let regressors = support
        .nodes()
        .iter()
        .map(|&k| apply_shift(closure, support, k, inputs))
        .collect::<Result<Vec<_>>>()?;
    let rows = inputs.as_slice().len();
    let design = DMatrix::from_fn(rows, p, |r, c| regressors[c].as_slice()[r]);
    let y = DVector::from_column_slice(outputs.as_slice());
    let mut gram = design.tr_mul(&design);
    let rhs = design.tr_mul(&y);
    for i in 0..p {
        gram[(i, i)] += ridge;
    }
    let scale = gram.diagonal().max().max(f64::MIN_POSITIVE);
    let singular = || {
        Error::Singular(format!(
            "normal matrix over {p} shifts is rank-deficient; use a positive ridge"
        ))
    };
    let chol = gram.cholesky().ok_or_else(singular)?;
    let min_pivot = chol.l_dirty().diagonal().map(|v| v * v).min();
    if min_pivot < PIVOT_TOL * scale {
        return Err(singular());
    }
    let h = chol.solve(&rhs);
    Ok(LsFilterFit {
        filter: DagFilter::new(support.clone(), h.iter().copied().collect())?,
        ridge,
    })
}

pub fn ls_predict(fit: &LsFilterFit, closure: &ClosurePair, x: &SignalBatch) -> Result<SignalBatch> {
    apply_filter(&fit.filter, closure, x)
}
