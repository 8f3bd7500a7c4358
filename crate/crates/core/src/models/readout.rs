//! Per-node scorer for source identification: a linear map `F -> 1` shared
//! by every node, evaluated only on the candidate nodes. Class `c` is
//! candidate node `candidates[c]`.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::nn::ParamTensor;
use crate::rng::Rng;
use crate::signal::SignalBatch;

/// Logits `(M, |candidates|)`: `x[cand, m, :] . weight + bias`.
pub fn source_readout(x: &SignalBatch, candidates: &[usize], weight: &[f64], bias: f64) -> Result<Array2<f64>> {
    if candidates.is_empty() {
        return Err(Error::param("candidate set is empty"));
    }
    if weight.len() != x.n_features() {
        return Err(Error::shape(format!(
            "readout has {} weights for {} features",
            weight.len(),
            x.n_features()
        )));
    }
    if let Some(&c) = candidates.iter().find(|&&c| c >= x.n_nodes()) {
        return Err(Error::param(format!("candidate {c} out of range")));
    }
    let mut logits = Array2::from_elem((x.n_samples(), candidates.len()), bias);
    for (c, &node) in candidates.iter().enumerate() {
        let block = x.node(node);
        for (m, row) in block.rows().into_iter().enumerate() {
            logits[(m, c)] += row.iter().zip(weight).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Ok(logits)
}

#[derive(Debug, Clone)]
pub struct Readout {
    pub(crate) candidates: Vec<usize>,
    pub(crate) weight: ParamTensor,
    pub(crate) bias: ParamTensor,
}

impl Readout {
    pub fn new(candidates: Vec<usize>, f: usize, rng: &mut Rng) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::param("candidate set is empty"));
        }
        Ok(Self {
            candidates,
            weight: ParamTensor::uniform(&[f], 1.0 / (f as f64).sqrt(), rng),
            bias: ParamTensor::zeros(&[1]),
        })
    }

    pub fn candidates(&self) -> &[usize] {
        &self.candidates
    }

    pub fn forward(&self, x: &SignalBatch) -> Result<Array2<f64>> {
        source_readout(x, &self.candidates, self.weight.values(), self.bias.values()[0])
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &SignalBatch, g: &Array2<f64>) -> SignalBatch {
        let f = x.n_features();
        let mut gx = x.zeros_like();
        let w = self.weight.values().to_vec();
        let mut gw = vec![0.0; f];
        let mut gb = 0.0;
        for (c, &node) in self.candidates.iter().enumerate() {
            let block = x.node(node);
            for m in 0..x.n_samples() {
                let gm = g[(m, c)];
                gb += gm;
                for q in 0..f {
                    gw[q] += gm * block[(m, q)];
                    gx.data_mut()[(node, m, q)] += gm * w[q];
                }
            }
        }
        for (acc, v) in self.weight.grad_mut().iter_mut().zip(gw) {
            *acc += v;
        }
        self.bias.grad_mut()[0] += gb;
        gx
    }
}
