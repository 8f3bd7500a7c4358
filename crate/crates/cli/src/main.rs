use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use dcn_core::data::Task;
use dcn_core::harness::{
    self, evaluate, fit, generate_task, run_sweep, run_table1, sample_graph, table1_default_methods,
    ExperimentConfig, Fitted, Method, Sweep, TaskKind,
};
use dcn_core::nn::Checkpoint;
use dcn_core::{sample_er_dag, Error, Result, WeightLaw};

#[derive(Parser)]
#[command(name = "dcn", version, about = "DAG convolutional networks: data generation, training and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an Erdos-Renyi DAG and print (or write) its edge list.
    GenGraph {
        #[arg(long, default_value_t = 100)]
        nodes: usize,
        #[arg(long, default_value_t = 0.2)]
        edge_prob: f64,
        #[arg(long, default_value = "signed-uniform:0.2:0.5")]
        weight_law: WeightLaw,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a task archive (graph, filter, tensors, splits).
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Archive directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one method and save it.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Train on an existing archive instead of generating data.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Score a saved fit on a split of an archive.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Multi-realization comparison of methods on one or both tasks.
    Table1 {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// diffusion, source-id or both.
        #[arg(long = "on", default_value = "both")]
        on: String,
        /// Comma-separated methods; defaults depend on the task.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
    },
    /// Diffusion NMSE against the noise power.
    SweepNoise(SweepArgs),
    /// Source-identification accuracy against the unobserved fraction.
    SweepUnobserved(SweepArgs),
    /// Source-identification accuracy against the edge probability.
    SweepDensity(SweepArgs),
    /// Print the effective configuration.
    ShowConfig {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Comma-separated grid points.
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    methods: Vec<Method>,
}

/// Configuration sources, applied in order: defaults, `--config`, the
/// per-field flags, then `--set key=value`.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    n_nodes: Option<String>,
    #[arg(long)]
    edge_prob: Option<String>,
    #[arg(long)]
    weight_law: Option<String>,
    #[arg(long)]
    n_samples: Option<String>,
    #[arg(long)]
    fractions: Option<String>,
    #[arg(long)]
    n_filter_shifts: Option<String>,
    #[arg(long)]
    n_src_nodes: Option<String>,
    #[arg(long)]
    noise_power: Option<String>,
    #[arg(long)]
    global_noise: Option<String>,
    #[arg(long)]
    unobserved_fraction: Option<String>,
    #[arg(long)]
    mask_channel: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    patience: Option<String>,
    #[arg(long)]
    min_improvement: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    ridge: Option<String>,
    #[arg(long)]
    realizations: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    seed_stride: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    output: Option<String>,
    /// Any config key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let flags = [
            ("task", &self.task),
            ("method", &self.method),
            ("n_nodes", &self.n_nodes),
            ("edge_prob", &self.edge_prob),
            ("weight_law", &self.weight_law),
            ("n_samples", &self.n_samples),
            ("fractions", &self.fractions),
            ("n_filter_shifts", &self.n_filter_shifts),
            ("n_src_nodes", &self.n_src_nodes),
            ("noise_power", &self.noise_power),
            ("global_noise", &self.global_noise),
            ("unobserved_fraction", &self.unobserved_fraction),
            ("mask_channel", &self.mask_channel),
            ("hidden", &self.hidden),
            ("lr", &self.lr),
            ("epochs", &self.epochs),
            ("patience", &self.patience),
            ("min_improvement", &self.min_improvement),
            ("batch_size", &self.batch_size),
            ("ridge", &self.ridge),
            ("realizations", &self.realizations),
            ("seed", &self.seed),
            ("seed_stride", &self.seed_stride),
            ("workers", &self.workers),
            ("output", &self.output),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Param(format!("--set expects key=value, got `{kv}`")))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_reports(reports: &[harness::MetricReport]) {
    println!("{:<14} {:>8} {:>4} {:>10} {:>10} {:>10} {:>9}", "method", "x", "n", "mean", "std", "median", "seconds");
    for r in reports {
        let s = r.summary;
        let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!(
            "{:<14} {:>8} {:>4} {:>10} {:>10} {:>10} {:>9}",
            r.method,
            r.x.map_or("-".to_string(), |x| format!("{x}")),
            s.map_or(0, |s| s.n),
            f(s.map(|s| s.mean)),
            f(s.map(|s| s.std)),
            f(s.map(|s| s.median)),
            f(r.mean_seconds()),
        );
    }
}

fn sweep(kind: Sweep, args: &SweepArgs) -> Result<()> {
    let cfg = args.cfg.resolve()?;
    let grid = if args.grid.is_empty() { kind.default_grid() } else { args.grid.clone() };
    let methods = if args.methods.is_empty() { kind.default_methods() } else { args.methods.clone() };
    let reports = run_sweep(&cfg, kind, &grid, &methods)?;
    print_reports(&reports);
    println!("wrote {}", harness::sweep_path(&cfg.output, kind, None).display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenGraph {
            nodes,
            edge_prob,
            weight_law,
            seed,
            out,
        } => {
            let dag = sample_er_dag(nodes, edge_prob, weight_law, seed)?;
            match out {
                Some(p) => std::fs::write(p, dag.to_edge_list())?,
                None => print!("{}", dag.to_edge_list()),
            }
        }
        Command::GenData { cfg, out } => {
            let cfg = cfg.resolve()?;
            let dag = sample_graph(&cfg, cfg.seed)?;
            generate_task(&cfg, &dag, cfg.seed)?.save(&out)?;
            println!("wrote {}", out.display());
        }
        Command::Train { cfg, data, checkpoint } => {
            let cfg = cfg.resolve()?;
            let task = match data {
                Some(dir) => Task::load(&dir)?,
                None => generate_task(&cfg, &sample_graph(&cfg, cfg.seed)?, cfg.seed)?,
            };
            let (fitted, seconds) = fit(&cfg, &task, cfg.seed)?;
            if let Fitted::Network(m) = &fitted {
                info!("\n{}", m.summary());
            }
            let val = evaluate(&fitted, &task, &task.splits().val)?;
            fitted.to_checkpoint().save(&checkpoint)?;
            println!("{} trained in {seconds:.2}s; validation metric {val:.6}", cfg.method);
        }
        Command::Eval { checkpoint, data, split } => {
            let task = Task::load(&data)?;
            let fitted = Fitted::from_checkpoint(&Checkpoint::load(&checkpoint)?, task.dag())?;
            let s = task.splits();
            let idx = match split.as_str() {
                "train" => &s.train,
                "val" => &s.val,
                "test" => &s.test,
                other => return Err(Error::Param(format!("unknown split `{other}`"))),
            };
            let metric = evaluate(&fitted, &task, idx)?;
            let name = match task {
                Task::Diffusion(_) => "nmse",
                Task::SourceId(_) => "accuracy",
            };
            println!("{name} {metric:?}");
        }
        Command::Table1 { cfg, on, methods } => {
            let cfg = cfg.resolve()?;
            let tasks = match on.as_str() {
                "both" => vec![TaskKind::Diffusion, TaskKind::SourceId],
                t => vec![t.parse()?],
            };
            for task in tasks {
                let ms = if methods.is_empty() { table1_default_methods(task) } else { methods.clone() };
                println!("== {task}");
                print_reports(&run_table1(&cfg, task, &ms)?);
            }
        }
        Command::SweepNoise(a) => sweep(Sweep::Noise, &a)?,
        Command::SweepUnobserved(a) => sweep(Sweep::Unobserved, &a)?,
        Command::SweepDensity(a) => sweep(Sweep::Density, &a)?,
        Command::ShowConfig { cfg } => print!("{}", cfg.resolve()?.to_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
