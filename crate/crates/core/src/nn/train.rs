//! Loss evaluation, gradients and the training loop.

use log::debug;
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use super::adam::Adam;
use super::loss::{cross_entropy, mse, Loss};
use super::param::ParamTensor;
use crate::error::{Error, Result};
use crate::rng::{rng_for, Stream};
use crate::signal::SignalBatch;

/// Model output: a node signal (regression) or class logits.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Signal(SignalBatch),
    Logits(Array2<f64>),
}

impl Prediction {
    pub fn as_signal(&self) -> Option<&SignalBatch> {
        match self {
            Prediction::Signal(s) => Some(s),
            Prediction::Logits(_) => None,
        }
    }

    pub fn as_logits(&self) -> Option<&Array2<f64>> {
        match self {
            Prediction::Logits(l) => Some(l),
            Prediction::Signal(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Signal(SignalBatch),
    Labels(Vec<usize>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Signal(s) => s.n_samples(),
            Targets::Labels(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        match self {
            Targets::Signal(s) => Targets::Signal(s.select_samples(idx)),
            Targets::Labels(l) => Targets::Labels(idx.iter().map(|&i| l[i]).collect()),
        }
    }
}

/// A model built from the fixed primitive set, with a hand-written backward
/// pass.
pub trait Differentiable {
    type Cache;

    fn forward(&self, x: &SignalBatch) -> Result<(Prediction, Self::Cache)>;

    /// Accumulates parameter gradients for the upstream gradient `grad`
    /// (same variant as the prediction).
    fn backward(&mut self, cache: Self::Cache, grad: &Prediction) -> Result<()>;

    fn params(&self) -> Vec<&ParamTensor>;

    fn params_mut(&mut self) -> Vec<&mut ParamTensor>;

    fn predict(&self, x: &SignalBatch) -> Result<Prediction> {
        Ok(self.forward(x)?.0)
    }

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

/// Batch-mean loss and its gradient with respect to the prediction.
pub fn loss_and_grad(pred: &Prediction, targets: &Targets, loss: Loss) -> Result<(f64, Prediction)> {
    match (pred, targets, loss) {
        (Prediction::Signal(p), Targets::Signal(t), Loss::Mse) => {
            let (l, g) = mse(p, t)?;
            Ok((l, Prediction::Signal(g)))
        }
        (Prediction::Logits(p), Targets::Labels(t), Loss::CrossEntropy) => {
            let (l, g) = cross_entropy(p, t)?;
            Ok((l, Prediction::Logits(g)))
        }
        (Prediction::Logits(p), Targets::Labels(t), Loss::Mse) => {
            // one-hot regression on logits
            let mut onehot = Array2::zeros(p.dim());
            for (r, &c) in t.iter().enumerate() {
                onehot[(r, c)] = 1.0;
            }
            let diff = p - &onehot;
            let size = diff.len() as f64;
            Ok(((diff.mapv(|v| v * v).sum()) / size, Prediction::Logits(diff * (2.0 / size))))
        }
        _ => Err(Error::shape(format!("loss {loss} does not fit this prediction/target pair"))),
    }
}

pub fn evaluate_loss<M: Differentiable>(model: &M, x: &SignalBatch, y: &Targets, loss: Loss) -> Result<f64> {
    let pred = model.predict(x)?;
    Ok(loss_and_grad(&pred, y, loss)?.0)
}

/// Zeroes gradients, runs forward and backward, and returns the loss. The
/// gradients are left in the model's parameters.
pub fn forward_backward<M: Differentiable>(model: &mut M, x: &SignalBatch, y: &Targets, loss: Loss) -> Result<f64> {
    if x.n_samples() != y.len() {
        return Err(Error::shape(format!("{} inputs for {} targets", x.n_samples(), y.len())));
    }
    model.zero_grad();
    let (pred, cache) = model.forward(x)?;
    let (value, grad) = loss_and_grad(&pred, y, loss)?;
    if !value.is_finite() {
        return Err(Error::NonFinite(value));
    }
    model.backward(cache, &grad)?;
    Ok(value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub loss: Loss,
    pub seed: u64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    /// Relative drop in validation loss needed to reset the patience counter.
    pub min_rel_improvement: f64,
    /// Drops smaller than this never count, which ends runs on a saturated loss.
    pub min_abs_improvement: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-3,
            max_epochs: 100,
            patience: 25,
            loss: Loss::Mse,
            seed: 0,
            batch_size: None,
            min_rel_improvement: 1e-3,
            min_abs_improvement: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::param(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.max_epochs == 0 {
            return Err(Error::param("max_epochs must be at least 1"));
        }
        if self.patience > self.max_epochs {
            return Err(Error::param("patience cannot exceed max_epochs"));
        }
        if !(0.0..1.0).contains(&self.min_rel_improvement) {
            return Err(Error::param("min_rel_improvement must lie in [0, 1)"));
        }
        if self.min_abs_improvement.is_nan() || self.min_abs_improvement < 0.0 {
            return Err(Error::param("min_abs_improvement must be non-negative"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::param("batch size must be positive"));
        }
        Ok(())
    }
}

/// Training and validation inputs/targets.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub train_x: SignalBatch,
    pub train_y: Targets,
    pub val_x: SignalBatch,
    pub val_y: Targets,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Adam epochs with early stopping on the validation loss. The parameters
/// of the best validation epoch are restored before returning.
pub fn train<M: Differentiable>(model: &mut M, data: &TrainData, cfg: &TrainConfig) -> Result<History> {
    cfg.validate()?;
    if data.train_x.n_samples() != data.train_y.len() || data.val_x.n_samples() != data.val_y.len() {
        return Err(Error::shape("inputs and targets disagree on sample count"));
    }
    if data.train_y.is_empty() || data.val_y.is_empty() {
        return Err(Error::param("training and validation splits must be non-empty"));
    }
    let mut opt = Adam::new(cfg.lr);
    let mut rng = rng_for(cfg.seed, Stream::Batches);
    let mut order: Vec<usize> = (0..data.train_y.len()).collect();
    let mut hist = History {
        best_val_loss: f64::INFINITY,
        ..Default::default()
    };
    let mut best: Vec<Vec<f64>> = model.params().iter().map(|p| p.values().to_vec()).collect();
    let mut stale = 0;
    let mut mark = f64::INFINITY;

    for epoch in 0..cfg.max_epochs {
        let train_loss = match cfg.batch_size {
            Some(bs) if bs < order.len() => {
                order.shuffle(&mut rng);
                let mut acc = 0.0;
                for chunk in order.chunks(bs) {
                    let x = data.train_x.select_samples(chunk);
                    let y = data.train_y.select(chunk);
                    let l = step(model, &mut opt, &x, &y, cfg.loss, epoch)?;
                    acc += l * chunk.len() as f64;
                }
                acc / order.len() as f64
            }
            _ => step(model, &mut opt, &data.train_x, &data.train_y, cfg.loss, epoch)?,
        };
        let val_loss = evaluate_loss(model, &data.val_x, &data.val_y, cfg.loss)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch, loss: val_loss });
        }
        debug!("epoch {epoch}: train {train_loss:.5e}, val {val_loss:.5e}");
        hist.train_loss.push(train_loss);
        hist.val_loss.push(val_loss);
        if val_loss < hist.best_val_loss {
            hist.best_val_loss = val_loss;
            hist.best_epoch = epoch;
            for (dst, p) in best.iter_mut().zip(model.params()) {
                dst.copy_from_slice(p.values());
            }
        }
        let needed = (mark * cfg.min_rel_improvement).max(cfg.min_abs_improvement);
        if mark == f64::INFINITY || mark - val_loss > needed {
            mark = val_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                debug!("early stop at epoch {epoch}, best {}", hist.best_epoch);
                break;
            }
        }
    }
    for (src, p) in best.iter().zip(model.params_mut()) {
        p.values_mut().copy_from_slice(src);
    }
    Ok(hist)
}

fn step<M: Differentiable>(
    model: &mut M,
    opt: &mut Adam,
    x: &SignalBatch,
    y: &Targets,
    loss: Loss,
    epoch: usize,
) -> Result<f64> {
    let l = match forward_backward(model, x, y, loss) {
        Err(Error::NonFinite(v)) => return Err(Error::Divergence { epoch, loss: v }),
        other => other?,
    };
    opt.step(&mut model.params_mut());
    Ok(l)
}

/// Row-wise argmax of logits; ties go to the lowest index.
pub fn argmax_rows(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
