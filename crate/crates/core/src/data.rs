//! Synthetic tasks on a DAG: network diffusion (regression) and source
//! identification (classification).
//!
//! Both draw a ground-truth filter from `n_filter_shifts` random causal
//! shifts with standard-normal coefficients scaled to unit norm. Every random
//! draw is keyed by the task seed, so a task regenerates bit for bit.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::dag::Dag;
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, ParamTensor};
use crate::rng::{derive_seed, rng_for, Stream};
use crate::signal::SignalBatch;
use crate::sp::{apply_filter, predecessor_masks, random_subset, transitive_closure, ClosurePair, DagFilter};

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.7, 0.2, 0.1];

/// Disjoint train/validation/test sample indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..m` cut into three parts. The first two sizes are
/// rounded; the test split takes the remainder.
pub fn split(m: usize, fractions: [f64; 3], seed: u64) -> Result<Splits> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::param(format!("split fractions {fractions:?} must be in [0, 1] and sum to 1")));
    }
    let n_train = (fractions[0] * m as f64).round() as usize;
    let n_val = ((fractions[1] * m as f64).round() as usize).min(m - n_train);
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut rng_for(seed, Stream::Split));
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok(Splits { train: idx, val, test })
}

/// Random filter over `size` distinct shifts, `||h|| = 1`.
pub fn random_filter(dag: &Dag, size: usize, seed: u64) -> Result<DagFilter> {
    let nodes = random_subset(dag.n(), size, derive_seed(seed, Stream::Subset))?;
    let mut rng = rng_for(seed, Stream::Filter);
    let mut h: Vec<f64> = (0..size).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    h.iter_mut().for_each(|v| *v /= norm);
    DagFilter::new(predecessor_masks(dag, &nodes)?, h)
}

fn check_samples(m: usize) -> Result<()> {
    if m < 10 {
        return Err(Error::param(format!("need at least 10 samples, got {m}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionParams {
    pub n_samples: usize,
    /// Inputs are nonzero on nodes `0..n_src_nodes`.
    pub n_src_nodes: usize,
    pub n_filter_shifts: usize,
    /// Noise power relative to signal power.
    pub noise_power: f64,
    /// Use one noise variance for the whole batch (mean signal power)
    /// instead of one per signal.
    pub global_noise: bool,
    pub fractions: [f64; 3],
}

impl Default for DiffusionParams {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            n_src_nodes: 20,
            n_filter_shifts: 25,
            noise_power: 0.05,
            global_noise: false,
            fractions: DEFAULT_FRACTIONS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiffusionTask {
    pub dag: Dag,
    pub closure: Arc<ClosurePair>,
    pub filter: DagFilter,
    pub params: DiffusionParams,
    pub seed: u64,
    /// Observed (noisy) inputs and outputs.
    pub inputs: SignalBatch,
    pub outputs: SignalBatch,
    pub clean_inputs: SignalBatch,
    pub clean_outputs: SignalBatch,
    pub splits: Splits,
}

// s + sigma * eps with sigma^2 = power * ||s||^2 / N, per sample or global.
fn add_noise(s: &SignalBatch, power: f64, global: bool, rng: &mut crate::rng::Rng) -> SignalBatch {
    if power == 0.0 {
        return s.clone();
    }
    let (n, m) = (s.n_nodes(), s.n_samples());
    let energy: Vec<f64> = (0..m)
        .map(|j| s.data().index_axis(ndarray::Axis(1), j).iter().map(|v| v * v).sum())
        .collect();
    let sigma: Vec<f64> = if global {
        let mean = energy.iter().sum::<f64>() / m as f64;
        vec![(power * mean / n as f64).sqrt(); m]
    } else {
        energy.iter().map(|e| (power * e / n as f64).sqrt()).collect()
    };
    let mut out = s.clone();
    // sample-major draw order keeps the noise of sample j independent of M
    for (j, &sj) in sigma.iter().enumerate() {
        for i in 0..n {
            for f in 0..s.n_features() {
                let e: f64 = StandardNormal.sample(rng);
                out.data_mut()[(i, j, f)] += sj * e;
            }
        }
    }
    out
}

pub fn gen_diffusion(dag: &Dag, params: &DiffusionParams, seed: u64) -> Result<DiffusionTask> {
    let n = dag.n();
    check_samples(params.n_samples)?;
    if params.n_src_nodes == 0 || params.n_src_nodes > n {
        return Err(Error::param(format!("cannot place inputs on {} of {n} nodes", params.n_src_nodes)));
    }
    if !(params.noise_power >= 0.0 && params.noise_power.is_finite()) {
        return Err(Error::param("noise power must be nonnegative"));
    }
    let closure = Arc::new(transitive_closure(dag));
    let filter = random_filter(dag, params.n_filter_shifts, seed)?;
    let mut rng = rng_for(seed, Stream::Data);
    let mut x = SignalBatch::zeros(n, params.n_samples, 1);
    for j in 0..params.n_samples {
        for i in 0..params.n_src_nodes {
            x.data_mut()[(i, j, 0)] = StandardNormal.sample(&mut rng);
        }
    }
    let y = apply_filter(&filter, &closure, &x)?;
    let mut noise = rng_for(seed, Stream::Noise);
    let inputs = add_noise(&x, params.noise_power, params.global_noise, &mut noise);
    let outputs = add_noise(&y, params.noise_power, params.global_noise, &mut noise);
    Ok(DiffusionTask {
        dag: dag.clone(),
        closure,
        filter,
        splits: split(params.n_samples, params.fractions, seed)?,
        params: params.clone(),
        seed,
        inputs,
        outputs,
        clean_inputs: x,
        clean_outputs: y,
    })
}

/// Which nodes may seed a diffusion. They are also the unobserved nodes.
#[derive(Debug, Clone, PartialEq)]
pub enum Candidates {
    /// The first `round(f * N)` nodes.
    Fraction(f64),
    /// The first `k` nodes.
    First(usize),
    Explicit(Vec<usize>),
}

impl Candidates {
    pub fn resolve(&self, n: usize) -> Result<Vec<usize>> {
        let v = match self {
            Candidates::Fraction(f) => {
                if !(0.0..=1.0).contains(f) {
                    return Err(Error::param(format!("unobserved fraction {f} outside [0, 1]")));
                }
                (0..(f * n as f64).round() as usize).collect()
            }
            Candidates::First(k) => (0..*k).collect(),
            Candidates::Explicit(v) => {
                let set: BTreeSet<_> = v.iter().copied().collect();
                if set.len() != v.len() || set.iter().any(|&c| c >= n) {
                    return Err(Error::param("candidates must be distinct nodes of the graph"));
                }
                v.clone()
            }
        };
        if v.is_empty() {
            return Err(Error::param("candidate set is empty"));
        }
        if v.len() >= n {
            return Err(Error::param("candidate set covers every node, nothing is observed"));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceIdParams {
    pub n_samples: usize,
    pub candidates: Candidates,
    pub n_filter_shifts: usize,
    /// Append a second feature flagging the masked nodes.
    pub mask_channel: bool,
    pub fractions: [f64; 3],
}

impl Default for SourceIdParams {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            candidates: Candidates::First(20),
            n_filter_shifts: 25,
            mask_channel: false,
            fractions: DEFAULT_FRACTIONS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SourceIdTask {
    pub dag: Dag,
    pub closure: Arc<ClosurePair>,
    pub filter: DagFilter,
    pub params: SourceIdParams,
    pub seed: u64,
    /// Candidate (and unobserved) nodes; class `c` is `candidates[c]`.
    pub candidates: Vec<usize>,
    /// Source node of each sample.
    pub sources: Vec<usize>,
    pub labels: Vec<usize>,
    /// Diffused outputs with the candidate rows zeroed.
    pub observed: SignalBatch,
    pub splits: Splits,
}

impl SourceIdTask {
    /// The unit impulses `e_source` that generated the outputs.
    pub fn source_inputs(&self) -> SignalBatch {
        let mut x = SignalBatch::zeros(self.dag.n(), self.sources.len(), 1);
        for (j, &s) in self.sources.iter().enumerate() {
            x.data_mut()[(s, j, 0)] = 1.0;
        }
        x
    }

    pub fn unobserved(&self) -> Vec<bool> {
        let mut m = vec![false; self.dag.n()];
        for &c in &self.candidates {
            m[c] = true;
        }
        m
    }
}

pub fn gen_source_id(dag: &Dag, params: &SourceIdParams, seed: u64) -> Result<SourceIdTask> {
    let n = dag.n();
    check_samples(params.n_samples)?;
    let candidates = params.candidates.resolve(n)?;
    let closure = Arc::new(transitive_closure(dag));
    let filter = random_filter(dag, params.n_filter_shifts, seed)?;
    let mut rng = rng_for(seed, Stream::Data);
    let labels: Vec<usize> = (0..params.n_samples)
        .map(|_| rand::Rng::random_range(&mut rng, 0..candidates.len()))
        .collect();
    let sources: Vec<usize> = labels.iter().map(|&l| candidates[l]).collect();
    let mut task = SourceIdTask {
        dag: dag.clone(),
        closure,
        filter,
        params: params.clone(),
        seed,
        candidates,
        sources,
        labels,
        observed: SignalBatch::zeros(n, 0, 1),
        splits: split(params.n_samples, params.fractions, seed)?,
    };
    let y = apply_filter(&task.filter, &task.closure, &task.source_inputs())?;
    let hidden = task.unobserved();
    let f = if params.mask_channel { 2 } else { 1 };
    let mut obs = SignalBatch::zeros(n, params.n_samples, f);
    for i in (0..n).filter(|&i| !hidden[i]) {
        for j in 0..params.n_samples {
            obs.data_mut()[(i, j, 0)] = y.get(j, i, 0);
        }
    }
    if params.mask_channel {
        for &c in &task.candidates {
            for j in 0..params.n_samples {
                obs.data_mut()[(c, j, 1)] = 1.0;
            }
        }
    }
    task.observed = obs.with_mask(hidden.iter().map(|h| !h).collect())?;
    Ok(task)
}

/// Either task, for archiving.
#[derive(Debug, Clone)]
pub enum Task {
    Diffusion(DiffusionTask),
    SourceId(SourceIdTask),
}

fn batch_tensor(b: &SignalBatch) -> ParamTensor {
    let d = b.data().dim();
    ParamTensor::new(&[d.0, d.1, d.2], b.as_slice().to_vec())
}

fn tensor_batch(t: &ParamTensor) -> Result<SignalBatch> {
    match t.shape() {
        &[n, m, f] => Ok(SignalBatch::from_node_major(
            ndarray::Array3::from_shape_vec((n, m, f), t.values().to_vec()).unwrap(),
        )),
        s => Err(Error::shape(format!("expected a rank-3 tensor, got {s:?}"))),
    }
}

fn index_tensor(v: &[usize]) -> ParamTensor {
    ParamTensor::new(&[v.len()], v.iter().map(|&i| i as f64).collect())
}

fn tensor_index(t: &ParamTensor) -> Vec<usize> {
    t.values().iter().map(|&v| v as usize).collect()
}

fn fmt_list<T: std::fmt::Debug>(v: &[T]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|x| x.parse().map_err(|_| Error::param(format!("bad list entry `{x}`"))))
        .collect()
}

impl Task {
    /// Writes `manifest.txt`, `graph.txt`, `filter.txt` and `tensors.txt`
    /// into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = vec![("format".to_string(), "dcn-task 1".to_string())];
        let mut tensors = Checkpoint::default();
        let (dag, filter) = match self {
            Task::Diffusion(t) => {
                let p = &t.params;
                manifest.extend([
                    ("task".into(), "diffusion".into()),
                    ("seed".into(), t.seed.to_string()),
                    ("n_samples".into(), p.n_samples.to_string()),
                    ("n_src_nodes".into(), p.n_src_nodes.to_string()),
                    ("n_filter_shifts".into(), p.n_filter_shifts.to_string()),
                    ("noise_power".into(), format!("{:?}", p.noise_power)),
                    ("global_noise".into(), p.global_noise.to_string()),
                    ("fractions".into(), fmt_list(&p.fractions)),
                ]);
                tensors.tensors = vec![
                    ("inputs".into(), batch_tensor(&t.inputs)),
                    ("outputs".into(), batch_tensor(&t.outputs)),
                    ("clean_inputs".into(), batch_tensor(&t.clean_inputs)),
                    ("clean_outputs".into(), batch_tensor(&t.clean_outputs)),
                ];
                (&t.dag, &t.filter)
            }
            Task::SourceId(t) => {
                let p = &t.params;
                manifest.extend([
                    ("task".into(), "source-id".into()),
                    ("seed".into(), t.seed.to_string()),
                    ("n_samples".into(), p.n_samples.to_string()),
                    ("candidates".into(), fmt_list(&t.candidates)),
                    ("n_filter_shifts".into(), p.n_filter_shifts.to_string()),
                    ("mask_channel".into(), p.mask_channel.to_string()),
                    ("fractions".into(), fmt_list(&p.fractions)),
                ]);
                tensors.tensors = vec![
                    ("observed".into(), batch_tensor(&t.observed)),
                    ("sources".into(), index_tensor(&t.sources)),
                    ("labels".into(), index_tensor(&t.labels)),
                ];
                (&t.dag, &t.filter)
            }
        };
        let splits = self.splits();
        tensors.tensors.extend([
            ("train".to_string(), index_tensor(&splits.train)),
            ("val".to_string(), index_tensor(&splits.val)),
            ("test".to_string(), index_tensor(&splits.test)),
        ]);
        let text: String = manifest.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        fs::write(dir.join("manifest.txt"), text)?;
        fs::write(dir.join("graph.txt"), dag.to_edge_list())?;
        fs::write(dir.join("filter.txt"), filter.to_text())?;
        tensors.save(&dir.join("tensors.txt"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("manifest.txt"))?;
        let mut kv = std::collections::HashMap::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(Error::Parse {
                line: ln + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            kv.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::param(format!("manifest lacks `{k}`")))
        };
        let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| Error::param(format!("bad `{k}`"))) };
        let flag = |k: &str| -> Result<bool> { get(k)?.parse().map_err(|_| Error::param(format!("bad `{k}`"))) };
        if get("format")? != "dcn-task 1" {
            return Err(Error::param("unsupported task archive format"));
        }
        let seed: u64 = get("seed")?.parse().map_err(|_| Error::param("bad `seed`"))?;
        let fr: Vec<f64> = parse_list(get("fractions")?)?;
        let fractions: [f64; 3] = fr.try_into().map_err(|_| Error::param("`fractions` needs three entries"))?;
        let dag = Dag::from_edge_list(&fs::read_to_string(dir.join("graph.txt"))?)?;
        let filter = DagFilter::from_text(&dag, &fs::read_to_string(dir.join("filter.txt"))?, false)?;
        let closure = Arc::new(transitive_closure(&dag));
        let t = Checkpoint::load(&dir.join("tensors.txt"))?;
        let splits = Splits {
            train: tensor_index(t.tensor("train")?),
            val: tensor_index(t.tensor("val")?),
            test: tensor_index(t.tensor("test")?),
        };
        match get("task")? {
            "diffusion" => Ok(Task::Diffusion(DiffusionTask {
                params: DiffusionParams {
                    n_samples: num("n_samples")?,
                    n_src_nodes: num("n_src_nodes")?,
                    n_filter_shifts: num("n_filter_shifts")?,
                    noise_power: get("noise_power")?.parse().map_err(|_| Error::param("bad `noise_power`"))?,
                    global_noise: flag("global_noise")?,
                    fractions,
                },
                dag,
                closure,
                filter,
                seed,
                inputs: tensor_batch(t.tensor("inputs")?)?,
                outputs: tensor_batch(t.tensor("outputs")?)?,
                clean_inputs: tensor_batch(t.tensor("clean_inputs")?)?,
                clean_outputs: tensor_batch(t.tensor("clean_outputs")?)?,
                splits,
            })),
            "source-id" => {
                let candidates: Vec<usize> = parse_list(get("candidates")?)?;
                let mut hidden = vec![false; dag.n()];
                for &c in &candidates {
                    *hidden.get_mut(c).ok_or_else(|| Error::param("candidate out of range"))? = true;
                }
                Ok(Task::SourceId(SourceIdTask {
                    params: SourceIdParams {
                        n_samples: num("n_samples")?,
                        candidates: Candidates::Explicit(candidates.clone()),
                        n_filter_shifts: num("n_filter_shifts")?,
                        mask_channel: flag("mask_channel")?,
                        fractions,
                    },
                    observed: tensor_batch(t.tensor("observed")?)?.with_mask(hidden.iter().map(|h| !h).collect())?,
                    sources: tensor_index(t.tensor("sources")?),
                    labels: tensor_index(t.tensor("labels")?),
                    candidates,
                    dag,
                    closure,
                    filter,
                    seed,
                    splits,
                }))
            }
            other => Err(Error::param(format!("unknown task `{other}`"))),
        }
    }

    pub fn splits(&self) -> &Splits {
        match self {
            Task::Diffusion(t) => &t.splits,
            Task::SourceId(t) => &t.splits,
        }
    }

    pub fn dag(&self) -> &Dag {
        match self {
            Task::Diffusion(t) => &t.dag,
            Task::SourceId(t) => &t.dag,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::{sample_er_dag, WeightLaw};
    use crate::sp::all_shifts;

    fn small(m: usize, noise: f64) -> DiffusionParams {
        DiffusionParams {
            n_samples: m,
            n_src_nodes: 5,
            n_filter_shifts: 6,
            noise_power: noise,
            ..Default::default()
        }
    }

    #[test]
    fn default_split_sizes() {
        let s = split(2000, DEFAULT_FRACTIONS, 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (1400, 400, 200));
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..2000).collect::<Vec<_>>());
        assert_eq!(s, split(2000, DEFAULT_FRACTIONS, 3).unwrap());
        assert_ne!(s, split(2000, DEFAULT_FRACTIONS, 4).unwrap());
        assert!(split(10, [0.5, 0.5, 0.5], 0).is_err());
    }

    #[test]
    fn noiseless_observations_are_clean() {
        let d = sample_er_dag(20, 0.2, WeightLaw::default(), 1).unwrap();
        let t = gen_diffusion(&d, &small(50, 0.0), 7).unwrap();
        assert_eq!(t.inputs, t.clean_inputs);
        assert_eq!(t.outputs, t.clean_outputs);
        let norm: f64 = t.filter.coeffs().iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        // inputs live on the first nodes only
        for i in 5..20 {
            assert!(t.clean_inputs.node(i).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn unit_filter_on_edgeless_graph_copies_input() {
        let d = Dag::edgeless(6).unwrap();
        let mut t = gen_diffusion(&d, &small(20, 0.0), 2).unwrap();
        let shifts = predecessor_masks(&d, &[0]).unwrap();
        t.filter = DagFilter::new(shifts, vec![1.0]).unwrap();
        let y = apply_filter(&t.filter, &t.closure, &t.clean_inputs).unwrap();
        for j in 0..20 {
            assert_eq!(y.get(j, 0, 0), t.clean_inputs.get(j, 0, 0));
            assert!((1..6).all(|i| y.get(j, i, 0) == 0.0));
        }
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let d = sample_er_dag(20, 0.3, WeightLaw::default(), 5).unwrap();
        let a = gen_diffusion(&d, &small(40, 0.1), 11).unwrap();
        let b = gen_diffusion(&d, &small(40, 0.1), 11).unwrap();
        assert_eq!(a.outputs, b.outputs);
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.filter, b.filter);
    }

    #[test]
    fn per_signal_noise_ratio() {
        let d = sample_er_dag(100, 0.2, WeightLaw::default(), 2).unwrap();
        let t = gen_diffusion(&d, &DiffusionParams::default(), 3).unwrap();
        let mut acc = 0.0;
        for j in 0..2000 {
            let clean = t.clean_outputs.sample(j);
            let noise = &t.outputs.sample(j) - &clean;
            acc += noise.iter().map(|v| v * v).sum::<f64>() / clean.iter().map(|v| v * v).sum::<f64>();
        }
        let ratio = acc / 2000.0;
        assert!((ratio - 0.05).abs() <= 0.005, "ratio {ratio}");
    }

    #[test]
    fn global_noise_uses_one_variance() {
        let d = sample_er_dag(30, 0.2, WeightLaw::default(), 2).unwrap();
        let mut p = small(400, 0.2);
        p.global_noise = true;
        let t = gen_diffusion(&d, &p, 3).unwrap();
        let total_clean: f64 = t.clean_outputs.as_slice().iter().map(|v| v * v).sum();
        let total_noise: f64 = t
            .outputs
            .as_slice()
            .iter()
            .zip(t.clean_outputs.as_slice())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        assert!((total_noise / total_clean - 0.2).abs() < 0.02);
    }

    #[test]
    fn true_filter_predicts_noiseless_outputs() {
        let d = sample_er_dag(40, 0.2, WeightLaw::default(), 9).unwrap();
        let t = gen_diffusion(&d, &small(30, 0.0), 1).unwrap();
        let y = apply_filter(&t.filter, &t.closure, &t.inputs).unwrap();
        assert_eq!(y, t.clean_outputs);
    }

    #[test]
    fn source_id_inputs_and_masks() {
        let d = sample_er_dag(50, 0.2, WeightLaw::default(), 4).unwrap();
        let p = SourceIdParams {
            n_samples: 200,
            ..Default::default()
        };
        let t = gen_source_id(&d, &p, 6).unwrap();
        assert_eq!(t.candidates, (0..20).collect::<Vec<_>>());
        let x = t.source_inputs();
        for j in 0..200 {
            let nz: Vec<usize> = (0..50).filter(|&i| x.get(j, i, 0) != 0.0).collect();
            assert_eq!(nz, vec![t.sources[j]]);
            assert_eq!(t.candidates[t.labels[j]], t.sources[j]);
            assert!((0..20).all(|i| t.observed.get(j, i, 0) == 0.0));
        }
        let mask = t.observed.mask().unwrap();
        assert!(mask.iter().enumerate().all(|(i, &obs)| obs == (i >= 20)));
    }

    #[test]
    fn edgeless_graph_hides_everything() {
        let d = Dag::edgeless(30).unwrap();
        let t = gen_source_id(&d, &SourceIdParams { n_samples: 50, ..Default::default() }, 0).unwrap();
        assert!(t.observed.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn chain_output_only_on_reachable_observed_nodes() {
        let d = Dag::chain(30, 1.0).unwrap();
        let mut t = gen_source_id(&d, &SourceIdParams { n_samples: 10, ..Default::default() }, 0).unwrap();
        // rebuild one sample with source 0 and an all-shift unit filter
        t.filter = DagFilter::new(all_shifts(&d), vec![1.0; 30]).unwrap();
        t.sources = vec![0; 10];
        let y = apply_filter(&t.filter, &t.closure, &t.source_inputs()).unwrap();
        let w = t.closure.w_dense();
        for i in 20..30 {
            assert_eq!(y.get(0, i, 0) != 0.0, w[(i, 0)] != 0.0);
        }
    }

    #[test]
    fn candidates_cannot_cover_the_graph() {
        assert!(Candidates::Fraction(1.0).resolve(10).is_err());
        assert!(Candidates::First(0).resolve(10).is_err());
        assert_eq!(Candidates::Fraction(0.3).resolve(100).unwrap().len(), 30);
        assert!(Candidates::Explicit(vec![1, 1]).resolve(10).is_err());
    }

    #[test]
    fn labels_are_uniform() {
        let d = sample_er_dag(100, 0.2, WeightLaw::default(), 4).unwrap();
        let t = gen_source_id(&d, &SourceIdParams::default(), 8).unwrap();
        let mut hist = [0usize; 20];
        for &l in &t.labels {
            hist[l] += 1;
        }
        // binomial(2000, 1/20): mean 100, sd ~ 9.75
        let sd = (2000.0 * 0.05 * 0.95f64).sqrt();
        assert!(hist.iter().all(|&c| (c as f64 - 100.0).abs() <= 4.0 * sd), "{hist:?}");
    }

    #[test]
    fn archives_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let d = sample_er_dag(25, 0.3, WeightLaw::default(), 4).unwrap();
        let t = gen_diffusion(&d, &small(30, 0.05), 2).unwrap();
        Task::Diffusion(t.clone()).save(dir.path()).unwrap();
        let Task::Diffusion(u) = Task::load(dir.path()).unwrap() else { panic!() };
        assert_eq!(u.outputs, t.outputs);
        assert_eq!(u.clean_inputs, t.clean_inputs);
        assert_eq!(u.filter, t.filter);
        assert_eq!(u.params, t.params);
        assert_eq!(u.splits, t.splits);

        let s = gen_source_id(&d, &SourceIdParams { n_samples: 30, mask_channel: true, ..Default::default() }, 1).unwrap();
        let sub = dir.path().join("sid");
        Task::SourceId(s.clone()).save(&sub).unwrap();
        let Task::SourceId(v) = Task::load(&sub).unwrap() else { panic!() };
        assert_eq!(v.observed, s.observed);
        assert_eq!(v.labels, s.labels);
        assert_eq!(v.candidates, s.candidates);
    }
}
