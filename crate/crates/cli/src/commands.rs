//! Subcommand definitions and handlers.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cds_core::targets::{TargetDensity, BUILTIN_NAMES};
use cds_core::trainers::{Clock, NoClock};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint::Checkpoint;
use crate::config::{ConfigError, Overrides, RunConfig};
use crate::formats::{
    save_lgcp, scatter_svg, write_samples_csv, MetricsWriter, PlotOptions, ResultsWriter,
};
use crate::pipeline::{self, Algo, BenchmarkConfig, TargetSpec};
use crate::WallClock;

/// An error caused by how the command was invoked (exit code 2).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Exit code for a failed command: 2 for usage errors, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() || err.downcast_ref::<ConfigError>().is_some() {
        2
    } else {
        1
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "cds",
    version,
    about = "Train, distill, sample and benchmark consistent diffusion samplers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a DIS or SCDS sampler.
    Train(TrainArgs),
    /// Distill a consistency (CDDS) model from a trained sampler.
    Distill(DistillArgs),
    /// Draw samples from a checkpoint.
    Sample(SampleArgs),
    /// Sweep NFE values and write a results table.
    Benchmark(BenchmarkArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Dis,
    Scds,
}

fn parse_target(s: &str) -> Result<String, String> {
    if BUILTIN_NAMES.contains(&s) {
        Ok(s.to_string())
    } else {
        Err(format!(
            "unknown target '{s}' (expected one of: {})",
            BUILTIN_NAMES.join(", ")
        ))
    }
}

/// Target selection shared by the subcommands.
#[derive(Args, Debug, Clone)]
pub struct TargetArgs {
    /// LGCP grid side M (the target has M*M dimensions).
    #[arg(long)]
    pub lgcp_grid: Option<usize>,
    /// ASCII PGM picture for the image target.
    #[arg(long)]
    pub image_pgm: Option<PathBuf>,
    /// LGCP dataset JSON written by `train`.
    #[arg(long)]
    pub lgcp_data: Option<PathBuf>,
}

impl TargetArgs {
    fn spec(&self, name: &str, default_grid: usize, seed: u64) -> TargetSpec {
        TargetSpec {
            name: name.to_string(),
            lgcp_grid: self.lgcp_grid.unwrap_or(default_grid),
            seed,
            image_pgm: self.image_pgm.clone(),
            lgcp_data: self.lgcp_data.clone(),
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub algo: AlgoArg,
    #[arg(long, value_parser = parse_target)]
    pub target: String,
    /// TOML file of `key = value` settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "iters")]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Time steps of the training grid (a power of two).
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda_sc: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    /// Iterations between Sinkhorn snapshots (0 disables them).
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Worker cap (computation is single-threaded).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Record `wall_ms = 0` so metrics files are reproducible byte for byte.
    #[arg(long)]
    pub no_wall_clock: bool,
    #[command(flatten)]
    pub target_args: TargetArgs,
}

#[derive(Args, Debug)]
pub struct DistillArgs {
    /// Checkpoint of a trained DIS or SCDS sampler.
    #[arg(long)]
    pub teacher: PathBuf,
    #[arg(long, value_parser = parse_target)]
    pub target: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "iters")]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Fine teacher steps (defaults to the teacher's training grid).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Distillation time nodes.
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub no_wall_clock: bool,
    #[command(flatten)]
    pub target_args: TargetArgs,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Network evaluations per sample.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub nfe: u64,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write an SVG scatter plot (2-d targets only).
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Simulate the controlled SDE instead of the probability-flow ODE.
    #[arg(long)]
    pub sde: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Target whose density contours are drawn in the SVG (defaults to the
    /// checkpoint's training target).
    #[arg(long, value_parser = parse_target)]
    pub target: Option<String>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub target_args: TargetArgs,
}

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, value_parser = parse_target)]
    pub target: String,
    /// Comma-separated NFE values.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64,128", value_parser = clap::value_parser!(u64).range(1..))]
    pub nfes: Vec<u64>,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Samples from each side entering the Sinkhorn distance.
    #[arg(long, default_value_t = 2048)]
    pub sinkhorn_n: usize,
    #[arg(long, default_value_t = 10_000)]
    pub sinkhorn_iters: usize,
    /// Report the debiased Sinkhorn divergence.
    #[arg(long)]
    pub debiased: bool,
    /// Minimum share of samples for a mode to count as covered.
    #[arg(long, default_value_t = 0.005)]
    pub coverage_threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Results CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub target_args: TargetArgs,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Distill(a) => cmd_distill(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Benchmark(a) => cmd_benchmark(a),
    }
}

fn check_threads(threads: Option<usize>) -> Result<()> {
    if threads == Some(0) {
        return Err(UsageError("--threads must be at least 1".into()).into());
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn clock(wall: bool) -> Box<dyn Clock> {
    if wall {
        Box::new(WallClock::start())
    } else {
        Box::new(NoClock)
    }
}

fn load_target(spec: &TargetSpec) -> Result<Box<dyn TargetDensity>> {
    pipeline::load_target(spec)
        .map_err(|e| UsageError(format!("cannot load target '{}': {e:#}", spec.name)).into())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn cmd_train(a: TrainArgs) -> Result<()> {
    check_threads(a.threads)?;
    let overrides = Overrides {
        iterations: a.iterations,
        batch: a.batch,
        steps: a.steps,
        lr: a.lr,
        lambda_sc: a.lambda_sc,
        seed: a.seed,
        hidden: a.hidden,
        depth: a.depth,
        lgcp_grid: a.target_args.lgcp_grid,
        eval_every: a.eval_every,
        threads: a.threads,
        wall_clock: a.no_wall_clock.then_some(false),
        ..Default::default()
    };
    let cfg = RunConfig::resolve(a.config.as_deref(), &overrides)?;
    let target = load_target(&a.target_args.spec(&a.target, cfg.lgcp_grid, cfg.seed))?;
    let algo = match a.algo {
        AlgoArg::Dis => Algo::Dis,
        AlgoArg::Scds => Algo::Scds,
    };
    create_dir(&a.out)?;
    fs::write(a.out.join("config.json"), cfg.snapshot())?;
    if a.target == "lgcp" {
        if let Some(t) = target_as_lgcp(&a.target_args, &cfg)? {
            save_lgcp(&a.out.join("lgcp.json"), &t)?;
        }
    }
    let mut metrics = MetricsWriter::create(&a.out.join("metrics.csv"))?;
    let mut snapshots: Option<csv::Writer<fs::File>> = None;
    let eval_path = a.out.join("eval.csv");
    let clock = clock(cfg.wall_clock);
    let (ckpt, out) = pipeline::train(
        algo,
        target.as_ref(),
        &a.target,
        &cfg,
        clock.as_ref(),
        |r| metrics.write(r),
        |s| {
            let w = match &mut snapshots {
                Some(w) => w,
                None => {
                    let mut w = csv::Writer::from_path(&eval_path)?;
                    w.write_record(["iter", "nfe", "metric", "value", "n", "converged"])?;
                    snapshots.insert(w)
                }
            };
            w.write_record([
                s.iter.to_string(),
                s.nfe.to_string(),
                "sinkhorn".into(),
                s.value.to_string(),
                s.n.to_string(),
                s.converged.to_string(),
            ])?;
            w.flush()?;
            Ok(())
        },
    )?;
    metrics.finish()?;
    ckpt.save(&a.out.join("model.ckpt"))?;
    if out.skipped > 0 {
        eprintln!(
            "warning: {} iterations were skipped after numeric failures",
            out.skipped
        );
    }
    eprintln!("wrote {}", a.out.join("model.ckpt").display());
    Ok(())
}

/// The LGCP dataset the run trains on, for persisting next to the model.
fn target_as_lgcp(
    args: &TargetArgs,
    cfg: &RunConfig,
) -> Result<Option<cds_core::targets::LgcpTarget>> {
    Ok(Some(match &args.lgcp_data {
        Some(path) => crate::formats::load_lgcp(path)?,
        None => cds_core::targets::lgcp_generate(
            &cds_core::targets::LgcpConfig::new(cfg.lgcp_grid),
            cfg.seed,
        )?,
    }))
}

pub fn cmd_distill(a: DistillArgs) -> Result<()> {
    check_threads(a.threads)?;
    let teacher = load_checkpoint(&a.teacher)?;
    let steps = a
        .steps
        .or_else(|| a.config.is_none().then_some(teacher.meta.steps));
    let overrides = Overrides {
        iterations: a.iterations,
        batch: a.batch,
        steps,
        lr: a.lr,
        seed: a.seed,
        nodes: a.nodes,
        threads: a.threads,
        wall_clock: a.no_wall_clock.then_some(false),
        ..Default::default()
    };
    let cfg = RunConfig::resolve(a.config.as_deref(), &overrides)?;
    let target = load_target(
        &a.target_args
            .spec(&a.target, cfg.lgcp_grid, teacher.meta.seed),
    )?;
    if target.dim() != teacher.model.dim() {
        return Err(UsageError(format!(
            "teacher has dimension {}, target '{}' has {}",
            teacher.model.dim(),
            a.target,
            target.dim()
        ))
        .into());
    }
    create_dir(&a.out)?;
    fs::write(a.out.join("config.json"), cfg.snapshot())?;
    let mut metrics = MetricsWriter::create(&a.out.join("metrics.csv"))?;
    let clock = clock(cfg.wall_clock);
    let (ckpt, out) = pipeline::distill(&teacher, &cfg, clock.as_ref(), |r| metrics.write(r))?;
    metrics.finish()?;
    ckpt.save(&a.out.join("model.ckpt"))?;
    if out.skipped > 0 {
        eprintln!(
            "warning: {} iterations were skipped after numeric failures",
            out.skipped
        );
    }
    eprintln!("wrote {}", a.out.join("model.ckpt").display());
    Ok(())
}

pub fn cmd_sample(a: SampleArgs) -> Result<()> {
    check_threads(a.threads)?;
    let ckpt = load_checkpoint(&a.ckpt)?;
    if a.sde && !ckpt.supports_log_z() {
        return Err(UsageError("--sde needs a DIS or SCDS checkpoint".into()).into());
    }
    if a.sde && !a.nfe.is_power_of_two() {
        return Err(UsageError("--sde needs a power-of-two --nfe".into()).into());
    }
    let x = pipeline::draw_samples(&ckpt, a.nfe as usize, a.n, a.seed, a.sde)?;
    write_samples_csv(&a.out, &x)?;
    if let Some(svg_path) = &a.svg {
        if x.cols() != 2 {
            eprintln!(
                "warning: --svg needs a 2-d target, this one has {} dimensions; no plot written",
                x.cols()
            );
        } else {
            let name = a.target.clone().unwrap_or_else(|| ckpt.meta.target.clone());
            let density = pipeline::load_target(&a.target_args.spec(&name, 8, ckpt.meta.seed))
                .ok()
                .filter(|t| t.dim() == 2);
            let opts = PlotOptions {
                title: format!("{} {} NFE={}", name, ckpt.meta.kind.as_str(), a.nfe),
                ..Default::default()
            };
            let svg = scatter_svg(&x, density.as_deref(), &opts)?;
            fs::write(svg_path, svg).with_context(|| format!("writing {}", svg_path.display()))?;
        }
    }
    Ok(())
}

pub fn cmd_benchmark(a: BenchmarkArgs) -> Result<()> {
    check_threads(a.threads)?;
    if !(a.coverage_threshold > 0.0 && a.coverage_threshold < 1.0) {
        return Err(UsageError("--coverage-threshold must lie in (0, 1)".into()).into());
    }
    let ckpt = load_checkpoint(&a.ckpt)?;
    let target = load_target(&a.target_args.spec(&a.target, 8, ckpt.meta.seed))?;
    if target.dim() != ckpt.model.dim() {
        return Err(UsageError(format!(
            "checkpoint has dimension {}, target '{}' has {}",
            ckpt.model.dim(),
            a.target,
            target.dim()
        ))
        .into());
    }
    let cfg = BenchmarkConfig {
        nfes: a.nfes.iter().map(|&k| k as usize).collect(),
        n: a.n,
        sinkhorn_n: a.sinkhorn_n,
        sinkhorn: cds_core::eval::SinkhornConfig {
            max_iters: a.sinkhorn_iters,
            debiased: a.debiased,
            ..Default::default()
        },
        coverage_threshold: a.coverage_threshold,
        seed: a.seed,
    };
    let mut w = ResultsWriter::create(&a.out, &pipeline::benchmark_notes(&ckpt))?;
    pipeline::benchmark(&ckpt, target.as_ref(), &cfg, |row| w.write(row))?;
    Ok(())
}
