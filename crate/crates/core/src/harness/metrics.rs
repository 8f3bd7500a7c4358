//! Evaluation metrics and summary statistics.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::nn::argmax_rows;
use crate::signal::SignalBatch;

/// Mean over samples of `||y - y_hat||^2 / ||y||^2`, against clean targets.
pub fn nmse(pred: &SignalBatch, target: &SignalBatch) -> Result<f64> {
    pred.same_shape(target)?;
    let m = target.n_samples();
    if m == 0 {
        return Err(Error::param("no samples to score"));
    }
    let mut num = vec![0.0; m];
    let mut den = vec![0.0; m];
    let f = target.n_features();
    for (p, t) in pred.as_slice().chunks_exact(m * f).zip(target.as_slice().chunks_exact(m * f)) {
        for j in 0..m {
            for q in 0..f {
                let (a, b) = (p[j * f + q], t[j * f + q]);
                num[j] += (a - b) * (a - b);
                den[j] += b * b;
            }
        }
    }
    let mut acc = 0.0;
    for (j, (n, d)) in num.iter().zip(&den).enumerate() {
        if *d == 0.0 {
            return Err(Error::ZeroNormTarget { sample: j });
        }
        acc += n / d;
    }
    Ok(acc / m as f64)
}

/// Share of rows whose argmax (lowest index on ties) equals the label.
pub fn accuracy(logits: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    if logits.nrows() != labels.len() {
        return Err(Error::shape(format!("{} rows of logits for {} labels", logits.nrows(), labels.len())));
    }
    if labels.is_empty() {
        return Err(Error::param("no samples to score"));
    }
    let hits = argmax_rows(logits).iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Mean, population standard deviation and quartiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            n: values.len(),
            mean,
            std: var.sqrt(),
            q25: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q75: quantile(&sorted, 0.75),
        })
    }
}

/// Linear interpolation between order statistics of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}
