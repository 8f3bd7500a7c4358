use ndarray::{ArrayView2, ArrayView3, ArrayViewMut2, ArrayViewMut3, IxDyn, ArrayViewD};
use rand::Rng as _;

use crate::rng::Rng;

/// A learnable tensor and its gradient accumulator (same shape, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    values: Vec<f64>,
    grad: Vec<f64>,
    shape: Vec<usize>,
}

impl ParamTensor {
    pub fn new(shape: &[usize], values: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), values.len(), "shape/value mismatch");
        Self {
            grad: vec![0.0; values.len()],
            values,
            shape: shape.to_vec(),
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(shape, vec![0.0; shape.iter().product()])
    }

    /// Entries i.i.d. uniform in `(-bound, bound)`.
    pub fn uniform(shape: &[usize], bound: f64, rng: &mut Rng) -> Self {
        let len = shape.iter().product();
        let values = (0..len).map(|_| rng.random_range(-bound..bound)).collect();
        Self::new(shape, values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        &mut self.grad
    }

    /// Split borrow for optimizers.
    pub fn values_and_grad(&mut self) -> (&mut [f64], &[f64]) {
        (&mut self.values, &self.grad)
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn view(&self) -> ArrayViewD<'_, f64> {
        ArrayViewD::from_shape(IxDyn(&self.shape), &self.values).unwrap()
    }

    pub fn view2(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.shape[0], self.shape[1]), &self.values).unwrap()
    }

    pub fn grad2_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        ArrayViewMut2::from_shape((self.shape[0], self.shape[1]), &mut self.grad).unwrap()
    }

    pub fn view3(&self) -> ArrayView3<'_, f64> {
        ArrayView3::from_shape((self.shape[0], self.shape[1], self.shape[2]), &self.values).unwrap()
    }

    pub fn grad3_mut(&mut self) -> ArrayViewMut3<'_, f64> {
        ArrayViewMut3::from_shape((self.shape[0], self.shape[1], self.shape[2]), &mut self.grad)
            .unwrap()
    }
}
