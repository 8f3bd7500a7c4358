use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::signal::SignalBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Mse,
    CrossEntropy,
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Loss::Mse => "mse",
            Loss::CrossEntropy => "cross-entropy",
        })
    }
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(Loss::Mse),
            "cross-entropy" | "ce" => Ok(Loss::CrossEntropy),
            _ => Err(Error::param(format!("unknown loss `{s}`"))),
        }
    }
}

/// Mean squared error over every entry, and its gradient.
pub fn mse(pred: &SignalBatch, target: &SignalBatch) -> Result<(f64, SignalBatch)> {
    pred.same_shape(target)?;
    let size = pred.as_slice().len() as f64;
    let mut grad = pred.zeros_like();
    let mut total = 0.0;
    for ((g, p), t) in grad.as_mut_slice().iter_mut().zip(pred.as_slice()).zip(target.as_slice()) {
        let d = p - t;
        total += d * d;
        *g = 2.0 * d / size;
    }
    Ok((total / size, grad))
}

/// Mean softmax cross-entropy over rows of `logits`, fused through
/// log-sum-exp, and its gradient.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (m, c) = logits.dim();
    if labels.len() != m {
        return Err(Error::shape(format!("{} labels for {m} rows of logits", labels.len())));
    }
    let mut grad = Array2::zeros((m, c));
    let mut total = 0.0;
    for (r, (row, &label)) in logits.rows().into_iter().zip(labels).enumerate() {
        if label >= c {
            return Err(Error::shape(format!("label {label} with {c} classes")));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[label];
        for (j, v) in row.iter().enumerate() {
            grad[(r, j)] = (v - lse).exp() / m as f64;
        }
        grad[(r, label)] -= 1.0 / m as f64;
    }
    Ok((total / m as f64, grad))
}
