//! Network architectures and the least-squares baseline.
//!
//! A [`Model`] is a stack of layers described by a [`ModelSpec`], optionally
//! topped by a candidate-restricted [`Readout`] for source identification.
//! The spec is what checkpoints store, so a model can be rebuilt on the same
//! graph and then loaded.

pub mod dcn;
pub mod dense;
pub mod fb;
pub mod ls;
pub mod readout;

use std::fmt::{self, Write as _};
use std::sync::Arc;

use ndarray::Array2;

pub use dcn::{dag_perceptron, dcn_layer, DcnLayer};
pub use dense::DenseLayer;
pub use fb::{fb_gcnn_layer, FbLayer, Gso, GsoKind};
pub use ls::{ls_fit, ls_predict, LsFilterFit};
pub use readout::{source_readout, Readout};

use crate::dag::Dag;
use crate::error::{Error, Result};
use crate::nn::{Activation, Checkpoint, Differentiable, ParamTensor, Prediction};
use crate::rng::Rng;
use crate::signal::SignalBatch;
use crate::sp::{predecessor_masks, transitive_closure, ClosurePair};

/// Layer family of a model.
#[derive(Debug, Clone, PartialEq)]
pub enum Arch {
    /// DAG convolution over the shifts at `shifts`.
    Dcn { shifts: Vec<usize>, transposed: bool },
    /// Polynomial filters in a shift operator with `taps` terms.
    Poly { gso: Gso, taps: usize },
    /// Dense layers over the flattened signal.
    Mlp,
}

/// What sits on top of the last layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    /// The last layer is linear and its output is the prediction.
    Regression,
    /// Every layer uses ReLU; a shared scorer ranks the candidates.
    Classification { candidates: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub arch: Arch,
    /// Feature widths `[F_in, F_1, ..., F_out]`; at least two entries.
    pub dims: Vec<usize>,
    pub head: Head,
}

impl ModelSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return Err(Error::param(format!("bad layer widths {:?}", self.dims)));
        }
        match &self.arch {
            Arch::Dcn { shifts, .. } if shifts.iter().any(|&k| k >= n) => {
                return Err(Error::param("shift node out of range"));
            }
            Arch::Poly { taps: 0, .. } => return Err(Error::param("a polynomial filter needs at least one tap")),
            _ => {}
        }
        if let Head::Classification { candidates } = &self.head {
            if candidates.is_empty() {
                return Err(Error::param("candidate set is empty"));
            }
            if candidates.iter().any(|&c| c >= n) {
                return Err(Error::param("candidate node out of range"));
            }
        }
        Ok(())
    }

    fn to_meta(&self) -> Vec<(String, String)> {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut meta = vec![("name".to_string(), self.name.clone())];
        match &self.arch {
            Arch::Dcn { shifts, transposed } => {
                meta.push(("arch".into(), "dcn".into()));
                meta.push(("shifts".into(), join(shifts)));
                meta.push(("transposed".into(), transposed.to_string()));
            }
            Arch::Poly { gso, taps } => {
                meta.push(("arch".into(), "poly".into()));
                meta.push(("gso".into(), gso.to_string()));
                meta.push(("taps".into(), taps.to_string()));
            }
            Arch::Mlp => meta.push(("arch".into(), "mlp".into())),
        }
        meta.push(("dims".into(), join(&self.dims)));
        match &self.head {
            Head::Regression => meta.push(("head".into(), "regression".into())),
            Head::Classification { candidates } => {
                meta.push(("head".into(), "classification".into()));
                meta.push(("candidates".into(), join(candidates)));
            }
        }
        meta
    }

    fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let list = |key: &str| -> Result<Vec<usize>> {
            let v = ck.require_meta(key)?;
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',')
                .map(|s| s.parse().map_err(|_| Error::param(format!("bad `{key}` entry `{s}`"))))
                .collect()
        };
        let arch = match ck.require_meta("arch")? {
            "dcn" => Arch::Dcn {
                shifts: list("shifts")?,
                transposed: ck
                    .require_meta("transposed")?
                    .parse()
                    .map_err(|_| Error::param("bad `transposed` flag"))?,
            },
            "poly" => Arch::Poly {
                gso: ck.require_meta("gso")?.parse()?,
                taps: ck
                    .require_meta("taps")?
                    .parse()
                    .map_err(|_| Error::param("bad `taps` count"))?,
            },
            "mlp" => Arch::Mlp,
            other => return Err(Error::param(format!("unknown architecture `{other}`"))),
        };
        let head = match ck.require_meta("head")? {
            "regression" => Head::Regression,
            "classification" => Head::Classification {
                candidates: list("candidates")?,
            },
            other => return Err(Error::param(format!("unknown head `{other}`"))),
        };
        Ok(Self {
            name: ck.require_meta("name")?.to_string(),
            arch,
            dims: list("dims")?,
            head,
        })
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Dcn(DcnLayer),
    Poly(FbLayer),
    Dense(DenseLayer),
}

pub enum LayerCache {
    Dcn(dcn::DcnCache),
    Poly(fb::FbCache),
    Dense(dense::DenseCache),
}

impl Layer {
    fn forward(&self, x: &SignalBatch) -> Result<(SignalBatch, LayerCache)> {
        Ok(match self {
            Layer::Dcn(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::Dcn(c))
            }
            Layer::Poly(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::Poly(c))
            }
            Layer::Dense(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::Dense(c))
            }
        })
    }

    fn backward(&mut self, cache: LayerCache, g: &SignalBatch, need_input_grad: bool) -> Result<Option<SignalBatch>> {
        Ok(match (self, cache) {
            (Layer::Dcn(l), LayerCache::Dcn(c)) => l.backward(c, g, need_input_grad),
            (Layer::Poly(l), LayerCache::Poly(c)) => l.backward(c, g, need_input_grad),
            (Layer::Dense(l), LayerCache::Dense(c)) => l.backward(c, g, need_input_grad),
            _ => return Err(Error::shape("layer cache does not match its layer")),
        })
    }

    fn params(&self) -> Vec<&ParamTensor> {
        match self {
            Layer::Dcn(l) => vec![&l.bank],
            Layer::Poly(l) => vec![&l.taps],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
        }
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        match self {
            Layer::Dcn(l) => vec![&mut l.bank],
            Layer::Poly(l) => vec![&mut l.taps],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
        }
    }

    fn describe(&self) -> String {
        match self {
            Layer::Dcn(l) => format!(
                "dcn {} -> {} {} |U|={} {}",
                l.f_in(),
                l.f_out(),
                l.activation,
                l.shifts.len(),
                if l.shifts.transposed() { "transposed" } else { "forward" }
            ),
            Layer::Poly(l) => format!(
                "poly {} -> {} {} taps={} gso={}",
                l.f_in(),
                l.f_out(),
                l.activation,
                l.n_taps(),
                l.gso
            ),
            Layer::Dense(l) => format!(
                "dense {}x{} -> {}x{} {}",
                l.n_in, l.f_in, l.n_out, l.f_out, l.activation
            ),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    layers: Vec<Layer>,
    readout: Option<Readout>,
}

pub struct ModelCache {
    layers: Vec<LayerCache>,
    last: Option<SignalBatch>,
}

impl Model {
    /// Builds and initializes the model described by `spec` on `dag`.
    pub fn build(spec: ModelSpec, dag: &Dag, rng: &mut Rng) -> Result<Self> {
        let closure = match spec.arch {
            Arch::Dcn { .. } => Some(Arc::new(transitive_closure(dag))),
            _ => None,
        };
        Self::build_with_closure(spec, dag, closure, rng)
    }

    /// Like [`Model::build`] but reuses a closure computed by the caller.
    pub fn build_with_closure(
        spec: ModelSpec,
        dag: &Dag,
        closure: Option<Arc<ClosurePair>>,
        rng: &mut Rng,
    ) -> Result<Self> {
        let n = dag.n();
        spec.validate(n)?;
        let classify = matches!(spec.head, Head::Classification { .. });
        let n_layers = spec.dims.len() - 1;
        let act = |l: usize| {
            if classify || l + 1 < n_layers {
                Activation::Relu
            } else {
                Activation::Identity
            }
        };
        let widths = spec.dims.windows(2).map(|w| (w[0], w[1]));
        let layers: Vec<Layer> = match &spec.arch {
            Arch::Dcn { shifts, transposed } => {
                let closure = match closure {
                    Some(c) if c.n() == n => c,
                    Some(_) => return Err(Error::shape("closure does not match the graph")),
                    None => Arc::new(transitive_closure(dag)),
                };
                let set = Arc::new(predecessor_masks(dag, shifts)?.with_transposed(*transposed));
                widths
                    .enumerate()
                    .map(|(l, (fi, fo))| Layer::Dcn(DcnLayer::new(closure.clone(), set.clone(), fi, fo, act(l), rng)))
                    .collect()
            }
            Arch::Poly { gso, taps } => {
                let s = Arc::new(gso.build(dag));
                widths
                    .enumerate()
                    .map(|(l, (fi, fo))| Layer::Poly(FbLayer::new(*gso, s.clone(), *taps, fi, fo, act(l), rng)))
                    .collect()
            }
            Arch::Mlp => widths
                .enumerate()
                .map(|(l, (fi, fo))| {
                    // hidden layers are plain vectors; the ends carry one row per node
                    let n_in = if l == 0 { n } else { 1 };
                    let n_out = if l + 1 == n_layers { n } else { 1 };
                    Layer::Dense(DenseLayer::new((n_in, fi), (n_out, fo), act(l), rng))
                })
                .collect(),
        };
        let readout = match &spec.head {
            Head::Regression => None,
            Head::Classification { candidates } => {
                Some(Readout::new(candidates.clone(), *spec.dims.last().unwrap(), rng)?)
            }
        };
        Ok(Self { spec, layers, readout })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn readout(&self) -> Option<&Readout> {
        self.readout.as_ref()
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// One line per layer plus the head.
    pub fn summary(&self) -> String {
        let mut s = format!("{} ({} parameters)\n", self.spec.name, self.n_params());
        for (i, l) in self.layers.iter().enumerate() {
            let _ = writeln!(s, "  layer {i}: {}", l.describe());
        }
        match &self.readout {
            Some(r) => {
                let _ = writeln!(s, "  readout: {} candidates", r.candidates().len());
            }
            None => s.push_str("  output: node signal\n"),
        }
        s
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let tensors = self
            .params()
            .into_iter()
            .enumerate()
            .map(|(i, p)| (format!("p{i}"), p.clone()))
            .collect();
        Checkpoint {
            meta: self.spec.to_meta(),
            tensors,
        }
    }

    /// Rebuilds the model on `dag` and loads the stored parameters.
    pub fn from_checkpoint(ck: &Checkpoint, dag: &Dag) -> Result<Self> {
        let spec = ModelSpec::from_checkpoint(ck)?;
        let mut model = Self::build(spec, dag, &mut crate::rng::rng_from(0))?;
        let count = model.params().len();
        if ck.tensors.len() != count {
            return Err(Error::shape(format!(
                "checkpoint has {} tensors, model needs {count}",
                ck.tensors.len()
            )));
        }
        for (i, p) in model.params_mut().into_iter().enumerate() {
            let t = ck.tensor(&format!("p{i}"))?;
            if t.shape() != p.shape() {
                return Err(Error::shape(format!(
                    "tensor p{i} has shape {:?}, model needs {:?}",
                    t.shape(),
                    p.shape()
                )));
            }
            p.values_mut().copy_from_slice(t.values());
        }
        Ok(model)
    }

    /// Class logits, for classification models.
    pub fn logits(&self, x: &SignalBatch) -> Result<Array2<f64>> {
        match self.predict(x)? {
            Prediction::Logits(l) => Ok(l),
            Prediction::Signal(_) => Err(Error::param("model has no classification head")),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.summary())
    }
}

impl Differentiable for Model {
    type Cache = ModelCache;

    fn forward(&self, x: &SignalBatch) -> Result<(Prediction, ModelCache)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for l in &self.layers {
            let (y, c) = l.forward(&h)?;
            caches.push(c);
            h = y;
        }
        match &self.readout {
            Some(r) => Ok((
                Prediction::Logits(r.forward(&h)?),
                ModelCache {
                    layers: caches,
                    last: Some(h),
                },
            )),
            None => Ok((
                Prediction::Signal(h),
                ModelCache {
                    layers: caches,
                    last: None,
                },
            )),
        }
    }

    fn backward(&mut self, cache: ModelCache, grad: &Prediction) -> Result<()> {
        let mut g = match (grad, self.readout.as_mut(), cache.last) {
            (Prediction::Logits(gl), Some(r), Some(last)) => r.backward(&last, gl),
            (Prediction::Signal(gs), None, _) => gs.clone(),
            _ => return Err(Error::shape("gradient does not match the model head")),
        };
        for (i, (l, c)) in self.layers.iter_mut().zip(cache.layers).enumerate().rev() {
            match l.backward(c, &g, i > 0)? {
                Some(next) => g = next,
                None => break,
            }
        }
        Ok(())
    }

    fn params(&self) -> Vec<&ParamTensor> {
        let mut v: Vec<&ParamTensor> = self.layers.iter().flat_map(|l| l.params()).collect();
        if let Some(r) = &self.readout {
            v.push(&r.weight);
            v.push(&r.bias);
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut v: Vec<&mut ParamTensor> = self.layers.iter_mut().flat_map(|l| l.params_mut()).collect();
        if let Some(r) = &mut self.readout {
            v.push(&mut r.weight);
            v.push(&mut r.bias);
        }
        v
    }
}
