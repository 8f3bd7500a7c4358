//! Fully connected layer over the flattened node-feature matrix (MLP baseline).

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::nn::ops::{affine, affine_backward};
use crate::nn::{Activation, ParamTensor};
use crate::rng::Rng;
use crate::signal::SignalBatch;

#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub(crate) n_in: usize,
    pub(crate) f_in: usize,
    pub(crate) n_out: usize,
    pub(crate) f_out: usize,
    pub(crate) weight: ParamTensor,
    pub(crate) bias: ParamTensor,
    pub(crate) activation: Activation,
}

#[derive(Debug)]
pub struct DenseCache {
    input: Array2<f64>,
    out: Array2<f64>,
}

// (N, M, F) -> (M, N*F)
fn flatten(x: &SignalBatch) -> Array2<f64> {
    let sm = x.to_sample_major();
    let m = sm.dim().0;
    sm.into_shape_with_order((m, x.n_nodes() * x.n_features())).unwrap()
}

fn unflatten(y: Array2<f64>, n: usize, f: usize) -> SignalBatch {
    let m = y.nrows();
    SignalBatch::from_sample_major(y.into_shape_with_order((m, n, f)).unwrap())
}

impl DenseLayer {
    pub fn new(
        (n_in, f_in): (usize, usize),
        (n_out, f_out): (usize, usize),
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        let d_in = n_in * f_in;
        let bound = 1.0 / (d_in as f64).sqrt();
        Self {
            n_in,
            f_in,
            n_out,
            f_out,
            weight: ParamTensor::uniform(&[d_in, n_out * f_out], bound, rng),
            bias: ParamTensor::zeros(&[n_out * f_out]),
            activation,
        }
    }

    pub fn forward(&self, x: &SignalBatch) -> Result<(SignalBatch, DenseCache)> {
        if (x.n_nodes(), x.n_features()) != (self.n_in, self.f_in) {
            return Err(Error::shape(format!(
                "dense layer expects {}x{} per sample, got {}x{}",
                self.n_in,
                self.f_in,
                x.n_nodes(),
                x.n_features()
            )));
        }
        let input = flatten(x);
        let mut out = affine(&input, self.weight.view2(), self.bias.values());
        self.activation.apply(out.as_slice_mut().unwrap());
        let y = unflatten(out.clone(), self.n_out, self.f_out);
        Ok((y, DenseCache { input, out }))
    }

    pub fn backward(&mut self, cache: DenseCache, grad: &SignalBatch, need_input_grad: bool) -> Option<SignalBatch> {
        let mut g = flatten(grad);
        self.activation.backward(g.as_slice_mut().unwrap(), cache.out.as_slice().unwrap());
        let w = self.weight.view2().to_owned();
        let mut gb = vec![0.0; self.bias.len()];
        let gx = affine_backward(&cache.input, w.view(), &g, self.weight.grad2_mut(), &mut gb);
        for (acc, v) in self.bias.grad_mut().iter_mut().zip(gb) {
            *acc += v;
        }
        need_input_grad.then(|| unflatten(gx, self.n_in, self.f_in))
    }
}
