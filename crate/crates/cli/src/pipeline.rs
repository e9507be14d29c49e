//! The train / distill / sample / benchmark workflows behind the CLI, as
//! library functions so tests can drive them without a subprocess.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use cds_core::diffcore::Tensor;
use cds_core::dynamics::{Control, Schedule, TimeGrid};
use cds_core::eval::{
    estimate_log_z, mode_coverage, sinkhorn_distance, SinkhornConfig, MIN_LOG_Z_SAMPLES,
};
use cds_core::nets::{ConsistencyHead, ControlNet, TimeArg};
use cds_core::sampling::{consistency_multi_step, sample_multi_step, sample_sde};
use cds_core::targets::{self, ImageTarget, TargetDensity};
use cds_core::trainers::{
    CddsTrainer, Clock, IterRecord, SamplerTrainer, StepOutcome, TrainOutput, STREAM_INIT,
};
use cds_core::{seeded_rng, Error};

use crate::checkpoint::{Checkpoint, Model, ModelKind, RunInfo};
use crate::config::RunConfig;
use crate::formats::{load_lgcp, read_pgm, ResultRow};

/// RNG stream for prior draws when sampling from a checkpoint.
pub const STREAM_SAMPLE: u64 = 0x5A3;
/// RNG stream for ground-truth reference samples.
pub const STREAM_REFERENCE: u64 = 0x6E7;
/// RNG stream for normalizing-constant trajectories.
pub const STREAM_LOG_Z: u64 = 0x102;
/// RNG stream for in-training snapshot evaluations.
pub const STREAM_SNAPSHOT: u64 = 0x5E7;

/// Where a target density comes from.
#[derive(Clone, Debug, Default)]
pub struct TargetSpec {
    pub name: String,
    pub lgcp_grid: usize,
    /// Seed used to generate an LGCP dataset when none is loaded.
    pub seed: u64,
    /// ASCII PGM picture for the `image` target.
    pub image_pgm: Option<PathBuf>,
    /// Persisted LGCP dataset for the `lgcp` target.
    pub lgcp_data: Option<PathBuf>,
}

impl TargetSpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            lgcp_grid: 8,
            ..Default::default()
        }
    }
}

/// Resolves a target by name, honouring PGM and LGCP data files.
pub fn load_target(spec: &TargetSpec) -> Result<Box<dyn TargetDensity>> {
    match spec.name.as_str() {
        "image" if spec.image_pgm.is_some() => {
            let pgm = read_pgm(spec.image_pgm.as_deref().unwrap())?;
            Ok(Box::new(ImageTarget::from_pixels(
                pgm.width,
                pgm.height,
                &pgm.pixels,
                -4.0,
                4.0,
            )?))
        }
        "lgcp" if spec.lgcp_data.is_some() => {
            let t = load_lgcp(spec.lgcp_data.as_deref().unwrap())?;
            Ok(Box::new(t))
        }
        name => Ok(targets::builtin(name, spec.lgcp_grid, spec.seed)?),
    }
}

/// A trained control queried with a fixed step-size input, for models that
/// never learned to use it.
pub struct FixedD<'a> {
    pub net: &'a ControlNet,
    pub d: f64,
}

impl Control for FixedD<'_> {
    fn dim(&self) -> usize {
        self.net.dim()
    }

    fn eval(&self, x: &Tensor, t: TimeArg, _d: TimeArg) -> cds_core::Result<Tensor> {
        self.net.forward(x, t, TimeArg::Shared(self.d))
    }
}

/// How a checkpoint turns prior draws into samples.
pub enum Sampler<'a> {
    /// Probability-flow ODE / SDE integration of a control.
    Control(Box<dyn Control + 'a>),
    Consistency(&'a ConsistencyHead),
}

impl Checkpoint {
    /// DIS controls were only trained at `d = T / steps`, so they are always
    /// queried with that value.
    pub fn sampler(&self) -> Sampler<'_> {
        match (&self.model, self.meta.kind) {
            (Model::Consistency(h), _) => Sampler::Consistency(h),
            (Model::Sampler(net), ModelKind::Dis) => Sampler::Control(Box::new(FixedD {
                net,
                d: net.horizon() / self.meta.steps as f64,
            })),
            (Model::Sampler(net), _) => Sampler::Control(Box::new(net)),
        }
    }

    pub fn supports_log_z(&self) -> bool {
        matches!(self.model, Model::Sampler(_))
    }
}

/// `n` samples using `nfe` network evaluations, seeded from `seed`.
///
/// `sde` switches control models from the probability-flow ODE to the
/// controlled SDE on an `nfe`-step grid.
pub fn draw_samples(
    ckpt: &Checkpoint,
    nfe: usize,
    n: usize,
    seed: u64,
    sde: bool,
) -> Result<Tensor> {
    if nfe == 0 {
        bail!("NFE must be at least 1");
    }
    let sched = ckpt.schedule()?;
    let mut rng = seeded_rng(seed, STREAM_SAMPLE);
    Ok(match ckpt.sampler() {
        Sampler::Control(control) if sde => {
            let grid = TimeGrid::new(nfe, sched.horizon())?;
            sample_sde(control.as_ref(), &sched, &grid, n, &mut rng)?
        }
        Sampler::Control(control) => sample_multi_step(control.as_ref(), &sched, nfe, n, &mut rng)?,
        Sampler::Consistency(_) if sde => bail!("consistency models have no SDE sampler"),
        Sampler::Consistency(head) => consistency_multi_step(head, &sched, nfe, n, &mut rng)?,
    })
}

/// Sampler family trained by [`train`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algo {
    Dis,
    Scds,
}

/// One Sinkhorn evaluation taken during training.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub iter: usize,
    pub nfe: usize,
    pub value: f64,
    pub n: usize,
    pub converged: bool,
}

/// Iteration budget of the in-training Sinkhorn evaluations.
pub const SNAPSHOT_SINKHORN_ITERS: usize = 1000;

fn snapshot_eval(
    ckpt: &Checkpoint,
    target: &dyn TargetDensity,
    cfg: &RunConfig,
    iter: usize,
) -> Result<Vec<Snapshot>> {
    let mut rng = seeded_rng(cfg.seed, STREAM_SNAPSHOT);
    let reference = target.gt_sample(cfg.eval_n, &mut rng)?;
    let sk = SinkhornConfig {
        max_iters: SNAPSHOT_SINKHORN_ITERS,
        ..Default::default()
    };
    let mut nfes = vec![1, cfg.steps];
    nfes.dedup();
    nfes.into_iter()
        .map(|nfe| {
            let x = draw_samples(ckpt, nfe, cfg.eval_n, cfg.seed, false)?;
            let r = sinkhorn_distance(&x, &reference, &sk)?;
            Ok(Snapshot {
                iter,
                nfe,
                value: r.cost,
                n: cfg.eval_n,
                converged: r.converged,
            })
        })
        .collect()
}

fn sampler_checkpoint(
    net: ControlNet,
    algo: Algo,
    cfg: &RunConfig,
    sched: Schedule,
    target: &str,
    iterations: usize,
) -> Checkpoint {
    let kind = match algo {
        Algo::Dis => ModelKind::Dis,
        Algo::Scds => ModelKind::Scds,
    };
    let info = RunInfo {
        kind,
        steps: cfg.steps,
        schedule: sched,
        seed: cfg.seed,
        target: target.to_string(),
        iterations,
    };
    Checkpoint::new(Model::Sampler(net), info)
}

/// Trains a DIS or SCDS sampler.
///
/// `on_record` sees every iteration; `on_snapshot` sees the periodic
/// Sinkhorn evaluations (every `eval_every` iterations, when the target has
/// exact samples).
pub fn train(
    algo: Algo,
    target: &dyn TargetDensity,
    target_name: &str,
    cfg: &RunConfig,
    clock: &dyn Clock,
    mut on_record: impl FnMut(&IterRecord) -> Result<()>,
    mut on_snapshot: impl FnMut(&Snapshot) -> Result<()>,
) -> Result<(Checkpoint, TrainOutput<ControlNet>)> {
    let sched = cfg.schedule()?;
    let mut tc = cfg.train_config();
    if algo == Algo::Dis {
        tc.lambda_sc = 0.0;
    }
    let net = ControlNet::new(
        cfg.net_config(target.dim(), sched),
        &mut seeded_rng(cfg.seed, STREAM_INIT),
    )?;
    let mut trainer = SamplerTrainer::from_net(net, target, sched, tc)?;
    let can_snapshot = cfg.eval_every > 0 && target.gt_sample(1, &mut seeded_rng(0, 0)).is_ok();
    let mut records = Vec::with_capacity(cfg.iterations);
    let mut skipped = 0;
    while trainer.iterations_done() < cfg.iterations {
        match trainer.step(clock)? {
            StepOutcome::Updated(r) => {
                on_record(&r)?;
                records.push(r);
            }
            StepOutcome::Skipped(_) => skipped += 1,
        }
        let done = trainer.iterations_done();
        if can_snapshot && done % cfg.eval_every == 0 {
            let ckpt =
                sampler_checkpoint(trainer.net().clone(), algo, cfg, sched, target_name, done);
            for s in snapshot_eval(&ckpt, target, cfg, done)? {
                on_snapshot(&s)?;
            }
        }
    }
    let net = trainer.into_net();
    let ckpt = sampler_checkpoint(net.clone(), algo, cfg, sched, target_name, cfg.iterations);
    Ok((
        ckpt,
        TrainOutput {
            model: net,
            records,
            skipped,
        },
    ))
}

/// Distills a consistency model from a sampler checkpoint.
pub fn distill(
    teacher: &Checkpoint,
    cfg: &RunConfig,
    clock: &dyn Clock,
    mut on_record: impl FnMut(&IterRecord) -> Result<()>,
) -> Result<(Checkpoint, TrainOutput<ConsistencyHead>)> {
    let Model::Sampler(net) = &teacher.model else {
        bail!("teacher checkpoint holds a consistency model; distillation needs a DIS or SCDS sampler");
    };
    let sched = teacher.schedule()?;
    let dc = cfg.distill_config();
    let mut trainer = CddsTrainer::new(net, sched, dc)?;
    let mut records = Vec::with_capacity(cfg.iterations);
    let mut skipped = 0;
    for _ in 0..cfg.iterations {
        match trainer.step(clock)? {
            StepOutcome::Updated(r) => {
                on_record(&r)?;
                records.push(r);
            }
            StepOutcome::Skipped(_) => skipped += 1,
        }
    }
    let head = trainer.into_head();
    let info = RunInfo {
        kind: ModelKind::Cdds,
        steps: cfg.steps,
        schedule: sched,
        seed: cfg.seed,
        target: teacher.meta.target.clone(),
        iterations: cfg.iterations,
    };
    let ckpt = Checkpoint::new(Model::Consistency(head.clone()), info);
    Ok((
        ckpt,
        TrainOutput {
            model: head,
            records,
            skipped,
        },
    ))
}

/// Settings of an NFE sweep.
#[derive(Clone, Debug)]
pub struct BenchmarkConfig {
    pub nfes: Vec<usize>,
    /// Samples per NFE for coverage and log Z.
    pub n: usize,
    /// Samples (from each side) entering the Sinkhorn distance.
    pub sinkhorn_n: usize,
    pub sinkhorn: SinkhornConfig,
    pub coverage_threshold: f64,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            nfes: vec![1, 2, 4, 8, 16, 32, 64, 128],
            n: 10_000,
            sinkhorn_n: 2048,
            sinkhorn: SinkhornConfig::default(),
            coverage_threshold: 0.005,
            seed: 0,
        }
    }
}

/// Header notes for a results file about `ckpt`.
pub fn benchmark_notes(ckpt: &Checkpoint) -> Vec<String> {
    if ckpt.supports_log_z() {
        Vec::new()
    } else {
        vec!["note: log_z omitted: consistency (CDDS) models map noise to samples directly and cannot estimate the normalizing constant".to_string()]
    }
}

/// Sweeps `cfg.nfes`, emitting `sinkhorn` (when exact samples exist),
/// `mode_coverage` (when modes are known) and `log_z` / `log_z_se` (for
/// control models with power-of-two NFE) rows.
pub fn benchmark(
    ckpt: &Checkpoint,
    target: &dyn TargetDensity,
    cfg: &BenchmarkConfig,
    mut on_row: impl FnMut(&ResultRow) -> Result<()>,
) -> Result<Vec<ResultRow>> {
    if cfg.nfes.is_empty() || cfg.nfes.contains(&0) {
        bail!("NFE list must be non-empty with every entry at least 1");
    }
    if ckpt.model.dim() != target.dim() {
        bail!(
            "checkpoint has dimension {}, target '{}' has {}",
            ckpt.model.dim(),
            target.name(),
            target.dim()
        );
    }
    let sched = ckpt.schedule()?;
    let reference =
        match target.gt_sample(cfg.sinkhorn_n, &mut seeded_rng(cfg.seed, STREAM_REFERENCE)) {
            Ok(r) => Some(r),
            Err(Error::Capability(_)) => None,
            Err(e) => return Err(e.into()),
        };
    let modes = target.modes();
    let mut rows = Vec::new();
    let mut emit = |row: ResultRow, rows: &mut Vec<ResultRow>| -> Result<()> {
        on_row(&row)?;
        rows.push(row);
        Ok(())
    };
    let row = |nfe: usize, metric: &str, value: f64, n: usize, converged: Option<bool>| ResultRow {
        target: target.name(),
        sampler: ckpt.meta.kind.as_str().to_string(),
        nfe,
        metric: metric.to_string(),
        value,
        n,
        seed: cfg.seed,
        converged,
    };
    for &nfe in &cfg.nfes {
        let x = draw_samples(ckpt, nfe, cfg.n, cfg.seed, false)
            .with_context(|| format!("sampling with NFE {nfe}"))?;
        if let Some(reference) = &reference {
            let k = cfg.sinkhorn_n.min(x.rows());
            let sub = x.select_rows(&(0..k).collect::<Vec<_>>());
            let r = sinkhorn_distance(&sub, reference, &cfg.sinkhorn)?;
            emit(
                row(nfe, "sinkhorn", r.cost, k, Some(r.converged)),
                &mut rows,
            )?;
        }
        if let Some(modes) = &modes {
            let c = mode_coverage(&x, modes, cfg.coverage_threshold)?;
            emit(row(nfe, "mode_coverage", c, x.rows(), None), &mut rows)?;
        }
        if let Sampler::Control(control) = ckpt.sampler() {
            if nfe.is_power_of_two() && cfg.n >= MIN_LOG_Z_SAMPLES {
                let grid = TimeGrid::new(nfe, sched.horizon())?;
                let mut rng = seeded_rng(cfg.seed, STREAM_LOG_Z);
                let est = estimate_log_z(control.as_ref(), &sched, &grid, target, cfg.n, &mut rng)?;
                emit(row(nfe, "log_z", est.value, est.n, None), &mut rows)?;
                emit(row(nfe, "log_z_se", est.se, est.n, None), &mut rows)?;
            }
        }
    }
    Ok(rows)
}
