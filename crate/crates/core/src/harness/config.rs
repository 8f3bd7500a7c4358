//! Experiment configuration: a flat `key = value` file with `#` comments.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::dag::WeightLaw;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Diffusion,
    SourceId,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Diffusion => "diffusion",
            TaskKind::SourceId => "source-id",
        })
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diffusion" => Ok(TaskKind::Diffusion),
            "source-id" => Ok(TaskKind::SourceId),
            _ => Err(Error::param(format!("unknown task `{s}` (diffusion, source-id)"))),
        }
    }
}

/// A model family with its size options, written like `DCN-30-T`,
/// `FB-GCNN-5-T`, `LS-ALL`, `GCN`, `MLP`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// `shifts = None` uses every node.
    Dcn { shifts: Option<usize>, transposed: bool },
    /// Least squares over the true filter support, or over all shifts.
    Ls { all: bool },
    FbGcnn { taps: usize, transposed: bool },
    Gcn { transposed: bool },
    Mlp,
}

pub const DEFAULT_FB_TAPS: usize = 2;

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = |b: bool| if b { "-T" } else { "" };
        match *self {
            Method::Dcn { shifts: None, transposed } => write!(f, "DCN{}", t(transposed)),
            Method::Dcn { shifts: Some(k), transposed } => write!(f, "DCN-{k}{}", t(transposed)),
            Method::Ls { all: false } => f.write_str("LS"),
            Method::Ls { all: true } => f.write_str("LS-ALL"),
            Method::FbGcnn { taps, transposed } => write!(f, "FB-GCNN-{taps}{}", t(transposed)),
            Method::Gcn { transposed } => write!(f, "GCN{}", t(transposed)),
            Method::Mlp => f.write_str("MLP"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::param(format!("unknown method `{s}`"));
        let upper = s.trim().to_ascii_uppercase();
        let (base, transposed) = match upper.strip_suffix("-T") {
            Some(b) => (b, true),
            None => (upper.as_str(), false),
        };
        let number = |rest: &str| -> Result<Option<usize>> {
            if rest.is_empty() {
                return Ok(None);
            }
            let n = rest.strip_prefix('-').ok_or_else(bad)?.parse::<usize>().map_err(|_| bad())?;
            if n == 0 {
                return Err(Error::param(format!("`{s}` asks for zero terms")));
            }
            Ok(Some(n))
        };
        let m = if let Some(rest) = base.strip_prefix("FB-GCNN") {
            Method::FbGcnn {
                taps: number(rest)?.unwrap_or(DEFAULT_FB_TAPS),
                transposed,
            }
        } else if let Some(rest) = base.strip_prefix("DCN") {
            Method::Dcn {
                shifts: number(rest)?,
                transposed,
            }
        } else {
            match (base, transposed) {
                ("GCN", _) => Method::Gcn { transposed },
                ("LS", false) => Method::Ls { all: false },
                ("LS-ALL", false) => Method::Ls { all: true },
                ("MLP", false) => Method::Mlp,
                _ => return Err(bad()),
            }
        };
        Ok(m)
    }
}

/// Everything one experiment needs. Realization `r` runs with seed
/// `seed + r * seed_stride`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub method: Method,
    pub n_nodes: usize,
    pub edge_prob: f64,
    pub weight_law: WeightLaw,
    pub n_samples: usize,
    pub fractions: [f64; 3],
    pub n_filter_shifts: usize,
    pub n_src_nodes: usize,
    pub noise_power: f64,
    pub global_noise: bool,
    /// Share of nodes (the first ones) that are unobserved source candidates.
    pub unobserved_fraction: f64,
    pub mask_channel: bool,
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    /// Relative validation-loss drop that counts as progress for `patience`.
    pub min_improvement: f64,
    /// 0 trains full-batch.
    pub batch_size: usize,
    pub ridge: f64,
    pub realizations: usize,
    pub seed: u64,
    pub seed_stride: u64,
    /// Worker threads for realizations; 0 lets the pool decide.
    pub workers: usize,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::Diffusion,
            method: Method::Dcn {
                shifts: None,
                transposed: false,
            },
            n_nodes: 100,
            edge_prob: 0.2,
            weight_law: WeightLaw::default(),
            n_samples: 2000,
            fractions: crate::data::DEFAULT_FRACTIONS,
            n_filter_shifts: 25,
            n_src_nodes: 20,
            noise_power: 0.05,
            global_noise: false,
            unobserved_fraction: 0.2,
            mask_channel: false,
            hidden: vec![32],
            lr: 5e-3,
            epochs: 100,
            patience: 25,
            min_improvement: 1e-3,
            batch_size: 100,
            ridge: 0.0,
            realizations: 25,
            seed: 0,
            seed_stride: 1,
            workers: 0,
            output: PathBuf::from("results"),
        }
    }
}

pub const KEYS: &[&str] = &[
    "task",
    "method",
    "n_nodes",
    "edge_prob",
    "weight_law",
    "n_samples",
    "fractions",
    "n_filter_shifts",
    "n_src_nodes",
    "noise_power",
    "global_noise",
    "unobserved_fraction",
    "mask_channel",
    "hidden",
    "lr",
    "epochs",
    "patience",
    "min_improvement",
    "batch_size",
    "ridge",
    "realizations",
    "seed",
    "seed_stride",
    "workers",
    "output",
];

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::param(format!("invalid value `{v}` for `{key}`")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|x| parse(key, x.trim())).collect()
}

fn join<T: fmt::Debug>(v: &[T]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn get(&self, key: &str) -> Result<String> {
        Ok(match key {
            "task" => self.task.to_string(),
            "method" => self.method.to_string(),
            "n_nodes" => self.n_nodes.to_string(),
            "edge_prob" => format!("{:?}", self.edge_prob),
            "weight_law" => self.weight_law.to_string(),
            "n_samples" => self.n_samples.to_string(),
            "fractions" => join(&self.fractions),
            "n_filter_shifts" => self.n_filter_shifts.to_string(),
            "n_src_nodes" => self.n_src_nodes.to_string(),
            "noise_power" => format!("{:?}", self.noise_power),
            "global_noise" => self.global_noise.to_string(),
            "unobserved_fraction" => format!("{:?}", self.unobserved_fraction),
            "mask_channel" => self.mask_channel.to_string(),
            "hidden" => join(&self.hidden),
            "lr" => format!("{:?}", self.lr),
            "epochs" => self.epochs.to_string(),
            "patience" => self.patience.to_string(),
            "min_improvement" => format!("{:?}", self.min_improvement),
            "batch_size" => self.batch_size.to_string(),
            "ridge" => format!("{:?}", self.ridge),
            "realizations" => self.realizations.to_string(),
            "seed" => self.seed.to_string(),
            "seed_stride" => self.seed_stride.to_string(),
            "workers" => self.workers.to_string(),
            "output" => self.output.display().to_string(),
            _ => return Err(Error::param(format!("unknown config key `{key}`"))),
        })
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "task" => self.task = v.parse()?,
            "method" => self.method = v.parse()?,
            "n_nodes" => self.n_nodes = parse(key, v)?,
            "edge_prob" => self.edge_prob = parse(key, v)?,
            "weight_law" => self.weight_law = v.parse()?,
            "n_samples" => self.n_samples = parse(key, v)?,
            "fractions" => {
                self.fractions = list::<f64>(key, v)?
                    .try_into()
                    .map_err(|_| Error::param("`fractions` needs three values"))?
            }
            "n_filter_shifts" => self.n_filter_shifts = parse(key, v)?,
            "n_src_nodes" => self.n_src_nodes = parse(key, v)?,
            "noise_power" => self.noise_power = parse(key, v)?,
            "global_noise" => self.global_noise = parse(key, v)?,
            "unobserved_fraction" => self.unobserved_fraction = parse(key, v)?,
            "mask_channel" => self.mask_channel = parse(key, v)?,
            "hidden" => self.hidden = list(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "patience" => self.patience = parse(key, v)?,
            "min_improvement" => self.min_improvement = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "ridge" => self.ridge = parse(key, v)?,
            "realizations" => self.realizations = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "seed_stride" => self.seed_stride = parse(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            "output" => self.output = PathBuf::from(v),
            _ => return Err(Error::param(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    /// Parses a config file; keys not mentioned keep their defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(Error::Parse {
                line: ln + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set(k.trim(), v).map_err(|e| Error::Parse {
                line: ln + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::param("realizations must be at least 1"));
        }
        if self.n_nodes < 2 {
            return Err(Error::param("need at least two nodes"));
        }
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return Err(Error::param(format!("edge probability {} outside [0, 1]", self.edge_prob)));
        }
        if self.hidden.contains(&0) {
            return Err(Error::param("hidden widths must be positive"));
        }
        if self.patience > self.epochs {
            return Err(Error::param(format!("patience {} exceeds {} epochs", self.patience, self.epochs)));
        }
        match (self.task, self.method) {
            (TaskKind::SourceId, Method::Ls { .. }) => {
                Err(Error::param("least squares has no source identification variant"))
            }
            (_, Method::Dcn { shifts: Some(k), .. }) if k > self.n_nodes => {
                Err(Error::param(format!("cannot pick {k} shifts on {} nodes", self.n_nodes)))
            }
            _ => Ok(()),
        }
    }
}
