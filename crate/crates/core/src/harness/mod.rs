//! Experiment orchestration: one realization samples a graph, generates a
//! task, fits a method and scores it on the test split. Realizations run on
//! a bounded worker pool; reports become CSV files.

pub mod config;
pub mod metrics;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

pub use config::{ExperimentConfig, Method, TaskKind};
pub use metrics::{accuracy, nmse, quantile, Summary};

use crate::dag::{sample_er_dag, Dag};
use crate::data::{gen_diffusion, gen_source_id, Candidates, DiffusionParams, SourceIdParams, Task};
use crate::error::{Error, Result};
use crate::models::{ls_fit, ls_predict, Arch, Gso, GsoKind, Head, LsFilterFit, Model, ModelSpec};
use crate::nn::{train, Checkpoint, Loss, ParamTensor, Prediction, Targets, TrainConfig, TrainData};
use crate::rng::{derive_seed, rng_for, Stream};
use crate::sp::{all_shifts, predecessor_masks, random_subset, ClosurePair};

/// Seed of realization `r`.
pub fn realization_seed(cfg: &ExperimentConfig, r: usize) -> u64 {
    cfg.seed.wrapping_add((r as u64).wrapping_mul(cfg.seed_stride))
}

pub fn sample_graph(cfg: &ExperimentConfig, seed: u64) -> Result<Dag> {
    sample_er_dag(cfg.n_nodes, cfg.edge_prob, cfg.weight_law, derive_seed(seed, Stream::Graph))
}

pub fn generate_task(cfg: &ExperimentConfig, dag: &Dag, seed: u64) -> Result<Task> {
    Ok(match cfg.task {
        TaskKind::Diffusion => Task::Diffusion(gen_diffusion(
            dag,
            &DiffusionParams {
                n_samples: cfg.n_samples,
                n_src_nodes: cfg.n_src_nodes,
                n_filter_shifts: cfg.n_filter_shifts,
                noise_power: cfg.noise_power,
                global_noise: cfg.global_noise,
                fractions: cfg.fractions,
            },
            seed,
        )?),
        TaskKind::SourceId => Task::SourceId(gen_source_id(
            dag,
            &SourceIdParams {
                n_samples: cfg.n_samples,
                candidates: Candidates::Fraction(cfg.unobserved_fraction),
                n_filter_shifts: cfg.n_filter_shifts,
                mask_channel: cfg.mask_channel,
                fractions: cfg.fractions,
            },
            seed,
        )?),
    })
}

/// Architecture for a network method; `None` for least squares.
pub fn model_spec(cfg: &ExperimentConfig, n: usize, f_in: usize, head: Head, seed: u64) -> Result<Option<ModelSpec>> {
    let arch = match cfg.method {
        Method::Ls { .. } => return Ok(None),
        Method::Dcn { shifts, transposed } => Arch::Dcn {
            shifts: match shifts {
                Some(k) => random_subset(n, k, derive_seed(seed, Stream::Shifts))?,
                None => (0..n).collect(),
            },
            transposed,
        },
        Method::FbGcnn { taps, transposed } => Arch::Poly {
            gso: Gso {
                kind: GsoKind::Adjacency,
                transposed,
            },
            taps,
        },
        Method::Gcn { transposed } => Arch::Poly {
            gso: Gso {
                kind: GsoKind::NormalizedSelfLoops,
                transposed,
            },
            taps: 2,
        },
        Method::Mlp => Arch::Mlp,
    };
    let mut dims = vec![f_in];
    dims.extend(&cfg.hidden);
    dims.push(match head {
        Head::Regression => 1,
        Head::Classification { .. } => *dims.last().unwrap(),
    });
    Ok(Some(ModelSpec {
        name: cfg.method.to_string(),
        arch,
        dims,
        head,
    }))
}

/// A trained network or a least-squares fit.
#[derive(Debug, Clone)]
pub enum Fitted {
    Network(Model),
    Ls(LsFilterFit),
}

impl Fitted {
    pub fn to_checkpoint(&self) -> Checkpoint {
        match self {
            Fitted::Network(m) => m.to_checkpoint(),
            Fitted::Ls(fit) => Checkpoint {
                meta: vec![
                    ("arch".into(), "ls".into()),
                    (
                        "support".into(),
                        fit.support().iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","),
                    ),
                    ("ridge".into(), format!("{:?}", fit.ridge())),
                ],
                tensors: vec![("h".into(), ParamTensor::new(&[fit.h_hat().len()], fit.h_hat().to_vec()))],
            },
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint, dag: &Dag) -> Result<Self> {
        if ck.meta("arch") != Some("ls") {
            return Ok(Fitted::Network(Model::from_checkpoint(ck, dag)?));
        }
        let support: Vec<usize> = ck
            .require_meta("support")?
            .split(',')
            .map(|s| s.parse().map_err(|_| Error::param("bad support entry")))
            .collect::<Result<_>>()?;
        let ridge: f64 = ck.require_meta("ridge")?.parse().map_err(|_| Error::param("bad ridge"))?;
        let filter = crate::sp::DagFilter::new(predecessor_masks(dag, &support)?, ck.tensor("h")?.values().to_vec())?;
        Ok(Fitted::Ls(LsFilterFit::from_filter(filter, ridge)))
    }
}

/// Fits `cfg.method` on the task's training split (validation split for
/// early stopping). Returns the fit and the seconds spent fitting.
pub fn fit(cfg: &ExperimentConfig, task: &Task, seed: u64) -> Result<(Fitted, f64)> {
    let splits = task.splits();
    match task {
        Task::Diffusion(t) => {
            if let Method::Ls { all } = cfg.method {
                let (support, ridge) = if all {
                    (all_shifts(&t.dag), cfg.ridge.max(1e-6))
                } else {
                    (t.filter.shifts().clone(), cfg.ridge)
                };
                let x = t.inputs.select_samples(&splits.train);
                let y = t.outputs.select_samples(&splits.train);
                let start = Instant::now();
                let fitted = ls_fit(&t.closure, &support, &x, &y, ridge)?;
                return Ok((Fitted::Ls(fitted), start.elapsed().as_secs_f64()));
            }
            let data = TrainData {
                train_x: t.inputs.select_samples(&splits.train),
                train_y: Targets::Signal(t.outputs.select_samples(&splits.train)),
                val_x: t.inputs.select_samples(&splits.val),
                val_y: Targets::Signal(t.outputs.select_samples(&splits.val)),
            };
            fit_network(cfg, &t.dag, Some(t.closure.clone()), 1, Head::Regression, Loss::Mse, &data, seed)
        }
        Task::SourceId(t) => {
            let data = TrainData {
                train_x: t.observed.select_samples(&splits.train),
                train_y: Targets::Labels(splits.train.iter().map(|&i| t.labels[i]).collect()),
                val_x: t.observed.select_samples(&splits.val),
                val_y: Targets::Labels(splits.val.iter().map(|&i| t.labels[i]).collect()),
            };
            let head = Head::Classification {
                candidates: t.candidates.clone(),
            };
            let f_in = t.observed.n_features();
            fit_network(cfg, &t.dag, Some(t.closure.clone()), f_in, head, Loss::CrossEntropy, &data, seed)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn fit_network(
    cfg: &ExperimentConfig,
    dag: &Dag,
    closure: Option<Arc<ClosurePair>>,
    f_in: usize,
    head: Head,
    loss: Loss,
    data: &TrainData,
    seed: u64,
) -> Result<(Fitted, f64)> {
    let spec = model_spec(cfg, dag.n(), f_in, head, seed)?
        .ok_or_else(|| Error::param(format!("{} is not a network", cfg.method)))?;
    let mut model = Model::build_with_closure(spec, dag, closure, &mut rng_for(seed, Stream::Init))?;
    let tc = TrainConfig {
        lr: cfg.lr,
        max_epochs: cfg.epochs,
        patience: cfg.patience,
        loss,
        seed,
        batch_size: (cfg.batch_size > 0).then_some(cfg.batch_size),
        min_rel_improvement: cfg.min_improvement,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    train(&mut model, data, &tc)?;
    Ok((Fitted::Network(model), start.elapsed().as_secs_f64()))
}

/// Test metric: NMSE against clean outputs, or accuracy.
pub fn evaluate(fitted: &Fitted, task: &Task, idx: &[usize]) -> Result<f64> {
    match (task, fitted) {
        (Task::Diffusion(t), _) => {
            let x = t.inputs.select_samples(idx);
            let pred = match fitted {
                Fitted::Ls(f) => ls_predict(f, &t.closure, &x)?,
                Fitted::Network(m) => match crate::nn::Differentiable::predict(m, &x)? {
                    Prediction::Signal(s) => s,
                    Prediction::Logits(_) => return Err(Error::param("regression needs a signal output")),
                },
            };
            nmse(&pred, &t.clean_outputs.select_samples(idx))
        }
        (Task::SourceId(t), Fitted::Network(m)) => {
            let logits = m.logits(&t.observed.select_samples(idx))?;
            let labels: Vec<usize> = idx.iter().map(|&i| t.labels[i]).collect();
            accuracy(&logits, &labels)
        }
        (Task::SourceId(_), Fitted::Ls(_)) => Err(Error::param("least squares cannot identify sources")),
    }
}

/// Outcome of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct RowResult {
    pub realization: usize,
    pub seed: u64,
    pub metric: Option<f64>,
    pub seconds: Option<f64>,
    pub status: String,
}

pub fn run_realization(cfg: &ExperimentConfig, seed: u64) -> Result<(f64, f64)> {
    let dag = sample_graph(cfg, seed)?;
    let task = generate_task(cfg, &dag, seed)?;
    let (fitted, seconds) = fit(cfg, &task, seed)?;
    let metric = evaluate(&fitted, &task, &task.splits().test)?;
    Ok((metric, seconds))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub method: String,
    /// Value of the swept parameter, if any.
    pub x: Option<f64>,
    pub rows: Vec<RowResult>,
    /// Over successful rows only.
    pub summary: Option<Summary>,
}

impl MetricReport {
    pub fn metrics(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.metric).collect()
    }

    pub fn mean_seconds(&self) -> Option<f64> {
        let s: Vec<f64> = self.rows.iter().filter_map(|r| r.seconds).collect();
        (!s.is_empty()).then(|| s.iter().sum::<f64>() / s.len() as f64)
    }
}

/// Runs every realization of `cfg`. Failed realizations are recorded and
/// left out of the summary.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricReport> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::param(format!("cannot start worker pool: {e}")))?;
    let rows: Vec<RowResult> = pool.install(|| {
        (0..cfg.realizations)
            .into_par_iter()
            .map(|r| {
                let seed = realization_seed(cfg, r);
                match run_realization(cfg, seed) {
                    Ok((metric, seconds)) => {
                        info!("{} realization {r}: {metric:.4} in {seconds:.2}s", cfg.method);
                        RowResult {
                            realization: r,
                            seed,
                            metric: Some(metric),
                            seconds: Some(seconds),
                            status: "ok".into(),
                        }
                    }
                    Err(e) => {
                        warn!("{} realization {r} (seed {seed}) failed: {e}", cfg.method);
                        RowResult {
                            realization: r,
                            seed,
                            metric: None,
                            seconds: None,
                            status: format!("failed: {e}"),
                        }
                    }
                }
            })
            .collect()
    });
    let metrics: Vec<f64> = rows.iter().filter_map(|r| r.metric).collect();
    Ok(MetricReport {
        method: cfg.method.to_string(),
        x: None,
        summary: Summary::of(&metrics),
        rows,
    })
}

const HEADER: [&str; 11] = [
    "method",
    "x",
    "realization",
    "seed",
    "metric",
    "seconds",
    "std",
    "q25",
    "median",
    "q75",
    "status",
];

fn num(v: Option<f64>) -> String {
    v.map(|v| format!("{v:?}")).unwrap_or_default()
}

/// One row per realization followed by an `aggregate` row, per report.
pub fn write_csv(path: &Path, reports: &[MetricReport]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HEADER)?;
    for rep in reports {
        let x = num(rep.x);
        for r in &rep.rows {
            w.write_record([
                rep.method.as_str(),
                &x,
                &r.realization.to_string(),
                &r.seed.to_string(),
                &num(r.metric),
                &num(r.seconds),
                "",
                "",
                "",
                "",
                &r.status,
            ])?;
        }
        let s = rep.summary;
        let n_ok = s.map_or(0, |s| s.n);
        w.write_record([
            rep.method.as_str(),
            &x,
            "aggregate",
            "",
            &num(s.map(|s| s.mean)),
            &num(rep.mean_seconds()),
            &num(s.map(|s| s.std)),
            &num(s.map(|s| s.q25)),
            &num(s.map(|s| s.median)),
            &num(s.map(|s| s.q75)),
            &format!("{n_ok}/{} ok", rep.rows.len()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `method, x, n, mean, std, q25, median, q75, seconds`: one row per report.
pub fn write_summary_csv(path: &Path, reports: &[MetricReport]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "x", "n", "mean", "std", "q25", "median", "q75", "seconds"])?;
    for rep in reports {
        let s = rep.summary;
        w.write_record([
            rep.method.clone(),
            num(rep.x),
            s.map_or(0, |s| s.n).to_string(),
            num(s.map(|s| s.mean)),
            num(s.map(|s| s.std)),
            num(s.map(|s| s.q25)),
            num(s.map(|s| s.median)),
            num(s.map(|s| s.q75)),
            num(rep.mean_seconds()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// The three parameter sweeps of the evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Noise,
    Unobserved,
    Density,
}

impl Sweep {
    pub fn name(self) -> &'static str {
        match self {
            Sweep::Noise => "noise",
            Sweep::Unobserved => "unobserved",
            Sweep::Density => "density",
        }
    }

    /// Config key that the sweep varies.
    pub fn key(self) -> &'static str {
        match self {
            Sweep::Noise => "noise_power",
            Sweep::Unobserved => "unobserved_fraction",
            Sweep::Density => "edge_prob",
        }
    }

    pub fn task(self) -> TaskKind {
        match self {
            Sweep::Noise => TaskKind::Diffusion,
            Sweep::Unobserved | Sweep::Density => TaskKind::SourceId,
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            Sweep::Noise => vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            Sweep::Unobserved => vec![0.1, 0.3, 0.5, 0.7, 0.9],
            Sweep::Density => vec![0.1, 0.3, 0.5, 0.7],
        }
    }

    pub fn default_methods(self) -> Vec<Method> {
        let names: &[&str] = match self {
            Sweep::Noise => &["DCN", "LS", "FB-GCNN-4"],
            Sweep::Unobserved => &["DCN-T", "DCN-30-T", "DCN-20-T", "DCN-10-T"],
            Sweep::Density => &["DCN-T", "DCN-20-T", "FB-GCNN-5-T", "FB-GCNN-2-T"],
        };
        names.iter().map(|s| s.parse().expect("valid method")).collect()
    }
}

fn file_stem(m: &Method) -> String {
    m.to_string().to_ascii_lowercase()
}

/// Runs every method at every grid point. Writes one CSV per method and a
/// summary CSV with `methods x points` rows into `base.output`.
pub fn run_sweep(base: &ExperimentConfig, sweep: Sweep, grid: &[f64], methods: &[Method]) -> Result<Vec<MetricReport>> {
    let mut all = Vec::new();
    for m in methods {
        let mut reports = Vec::new();
        for &x in grid {
            let mut cfg = base.clone();
            cfg.task = sweep.task();
            cfg.method = *m;
            cfg.set(sweep.key(), &format!("{x:?}"))?;
            info!("{} sweep: {m} at {x}", sweep.name());
            let mut rep = run_experiment(&cfg)?;
            rep.x = Some(x);
            reports.push(rep);
        }
        write_csv(&sweep_path(&base.output, sweep, Some(m)), &reports)?;
        all.extend(reports);
    }
    write_summary_csv(&sweep_path(&base.output, sweep, None), &all)?;
    Ok(all)
}

pub fn sweep_path(dir: &Path, sweep: Sweep, method: Option<&Method>) -> PathBuf {
    match method {
        Some(m) => dir.join(format!("{}_{}.csv", sweep.name(), file_stem(m))),
        None => dir.join(format!("{}_summary.csv", sweep.name())),
    }
}

pub fn table1_default_methods(task: TaskKind) -> Vec<Method> {
    let names: &[&str] = match task {
        TaskKind::Diffusion => &["DCN", "DCN-30", "DCN-10", "DCN-T", "LS", "FB-GCNN-2", "GCN", "MLP"],
        TaskKind::SourceId => &["DCN", "DCN-T", "DCN-30-T", "FB-GCNN-2-T", "GCN-T", "MLP"],
    };
    names.iter().map(|s| s.parse().expect("valid method")).collect()
}

/// Runs the listed methods on one task; writes `table1_<task>.csv` (all
/// rows) and `table1_<task>_summary.csv`.
pub fn run_table1(base: &ExperimentConfig, task: TaskKind, methods: &[Method]) -> Result<Vec<MetricReport>> {
    let mut reports = Vec::new();
    for m in methods {
        let mut cfg = base.clone();
        cfg.task = task;
        cfg.method = *m;
        reports.push(run_experiment(&cfg)?);
    }
    write_csv(&base.output.join(format!("table1_{task}.csv")), &reports)?;
    write_summary_csv(&base.output.join(format!("table1_{task}_summary.csv")), &reports)?;
    Ok(reports)
}
