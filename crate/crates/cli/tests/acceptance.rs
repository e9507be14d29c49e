//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! ```text
//! cargo test -p cds --test acceptance            # every criterion
//! cargo test -p cds --test acceptance -- 1 4 10  # a subset
//! ```
//!
//! Criteria 5, 6, 8 and 9 train full-size models (hours on one core).
//! Trained checkpoints are cached in `CDS_ACCEPTANCE_CACHE` (default
//! `target/tmp/acceptance-cache`) together with their training time, so
//! reruns only repeat the evaluations. Delete the directory to retrain.
//! `CDS_ACCEPTANCE_STRICT=1` turns any FAIL into a nonzero exit status.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Result};
use cds::checkpoint::{Checkpoint, Model};
use cds::config::RunConfig;
use cds::formats::MetricsWriter;
use cds::pipeline::{self, Algo, FixedD, STREAM_LOG_Z, STREAM_REFERENCE};
use cds::WallClock;
use cds_core::diffcore::{finite_difference_check, Gradients, ParamId, Tensor};
use cds_core::dynamics::{
    sample_prior, shortcut_step, simulate_sde, two_step_target, ScaledIdentityControl, Schedule,
    SdePath, TimeGrid, VpSchedule,
};
use cds_core::eval::{estimate_log_z, mode_coverage, sinkhorn_distance, SinkhornConfig};
use cds_core::losses::{cd_loss, kl_objective, lv_loss, rn_graph_from_path, rn_terms, sc_loss};
use cds_core::math::{exp, ln};
use cds_core::nets::{ConsistencyHead, ControlNet, NetConfig, TimeArg};
use cds_core::sampling::{sample_multi_step, sample_single_step};
use cds_core::seeded_rng;
use cds_core::targets::{builtin, GmmTarget, Scaled, TargetDensity};
use cds_core::trainers::{NoClock, SamplerTrainer, StepOutcome, TrainConfig};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn main() {
    let wanted: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let strict = std::env::var("CDS_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut ctx = Context::new(cache_dir());
    let criteria: [(usize, &str, fn(&mut Context) -> Result<Verdict>); 10] = [
        (1, "gradient suite", c1_gradients),
        (2, "solver order", c2_solver_order),
        (3, "divergence invariances", c3_invariances),
        (4, "sinkhorn oracle", c4_sinkhorn_oracle),
        (5, "gmm reproduction", c5_gmm),
        (6, "single-step vs naive baseline", c6_single_step),
        (7, "joint-training overhead", c7_overhead),
        (8, "mw54 run", c8_mw54),
        (9, "lgcp substitute", c9_lgcp),
        (10, "reduction identities", c10_reductions),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let verdict =
            run(&mut ctx).unwrap_or_else(|e| Verdict::new(false, format!("error: {e:#}")));
        let secs = start.elapsed().as_secs_f64();
        failed += usize::from(!verdict.pass);
        let status = if verdict.pass { "PASS" } else { "FAIL" };
        println!(
            "{status} criterion {id:>2} ({name}, {secs:.1} s): {}",
            verdict.detail
        );
    }
    if strict && failed > 0 {
        std::process::exit(1);
    }
}

fn cache_dir() -> PathBuf {
    std::env::var_os("CDS_ACCEPTANCE_CACHE")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-cache"))
}

fn sched() -> Schedule {
    Schedule::Vp(VpSchedule::default())
}

// ---------------------------------------------------------------------------
// Criterion 1

fn tiny_net(stream: u64) -> ControlNet {
    let cfg = NetConfig {
        hidden: 2,
        depth: 2,
        fourier_features: 2,
        ..NetConfig::with_reference(2, sched())
    };
    let mut net = ControlNet::new(cfg, &mut seeded_rng(7, 0)).unwrap();
    perturb(&mut net, 0.5, stream);
    net
}

fn perturb(net: &mut ControlNet, scale: f64, stream: u64) {
    let ids: Vec<_> = net.params().ids().collect();
    let mut rng = seeded_rng(7, stream);
    for id in ids {
        let t = net.params_mut().get_mut(id);
        let noise = sample_prior(t.rows(), t.cols(), &mut rng);
        for (p, z) in t.data_mut().iter_mut().zip(noise.data()) {
            *p += scale * z;
        }
    }
}

fn with_param(net: &ControlNet, id: ParamId, value: &Tensor) -> ControlNet {
    let mut out = net.clone();
    *out.params_mut().get_mut(id) = value.clone();
    out
}

fn worst_fd_error(net: &ControlNet, grads: &Gradients, loss: impl Fn(&ControlNet) -> f64) -> f64 {
    net.params()
        .ids()
        .map(|id| {
            finite_difference_check(
                |p| loss(&with_param(net, id, p)),
                net.params().get(id),
                grads.get(id),
                1e-5,
            )
        })
        .fold(0.0, f64::max)
}

fn mean_sq_gap(a: &Tensor, b: &Tensor) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.rows() as f64
}

fn c1_gradients(_: &mut Context) -> Result<Verdict> {
    let start = Instant::now();
    let net = tiny_net(1);
    let target = GmmTarget::grid9();
    let grid = TimeGrid::new(4, 1.0)?;
    let mut rng = seeded_rng(11, 0);
    let x0 = sample_prior(6, 2, &mut rng);
    let path: SdePath = simulate_sde(&tiny_net(2), &sched(), &grid, x0, &mut rng)?;
    let mut errors = BTreeMap::new();

    let graph = rn_graph_from_path(&path, &net, &sched(), &target)?;
    for (name, is_lv) in [("lv", true), ("kl", false)] {
        let objective = |t: &_| if is_lv { lv_loss(t) } else { kl_objective(t) };
        let loss = objective(&graph.terms)?;
        let mut grads = Gradients::zeros_like(net.params());
        graph.backward(&loss, 1.0, &mut grads)?;
        let err = worst_fd_error(&net, &grads, |n| {
            objective(&rn_terms(&path, n, &sched(), &target).unwrap())
                .unwrap()
                .value
        });
        errors.insert(name, err);
    }

    let head = ConsistencyHead::new(net.clone(), 1.0, 0.25)?;
    let mut rng = seeded_rng(12, 0);
    let (x_n, x_np1) = (sample_prior(5, 2, &mut rng), sample_prior(5, 2, &mut rng));
    let t_n = [0.0, 0.25, 0.5, 0.25, 0.5];
    let t_np1: Vec<f64> = t_n.iter().map(|t| t + 0.25).collect();
    let loss = cd_loss(
        &head,
        &x_n,
        TimeArg::PerRow(&t_n),
        &x_np1,
        TimeArg::PerRow(&t_np1),
    )?;
    let mut grads = Gradients::zeros_like(net.params());
    loss.backward(1.0, &mut grads)?;
    let frozen = head.forward(&x_np1, TimeArg::PerRow(&t_np1))?;
    errors.insert(
        "cd",
        worst_fd_error(&net, &grads, |n| {
            let h = ConsistencyHead::new(n.clone(), 1.0, 0.25).unwrap();
            mean_sq_gap(&h.forward(&x_n, TimeArg::PerRow(&t_n)).unwrap(), &frozen)
        }),
    );

    let x = sample_prior(5, 2, &mut seeded_rng(13, 0));
    let (t, d) = ([0.0, 0.25, 0.5, 0.0, 0.5], [0.25, 0.125, 0.25, 0.5, 0.125]);
    let (t, d) = (TimeArg::PerRow(&t), TimeArg::PerRow(&d));
    let loss = sc_loss(&net, &sched(), &x, t, d)?;
    let mut grads = Gradients::zeros_like(net.params());
    loss.backward(1.0, &mut grads)?;
    let frozen = two_step_target(&net, &sched(), &x, t, d)?;
    errors.insert(
        "sc",
        worst_fd_error(&net, &grads, |n| {
            mean_sq_gap(&shortcut_step(n, &sched(), &x, t, d).unwrap(), &frozen)
        }),
    );

    let secs = start.elapsed().as_secs_f64();
    let worst = errors.values().copied().fold(0.0, f64::max);
    let detail = errors
        .iter()
        .map(|(k, v)| format!("{k} {v:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(Verdict::new(
        worst <= 1e-4 && secs < 10.0,
        format!("max rel. error {detail} (≤ 1e-4), {secs:.2} s (< 10 s)"),
    ))
}

// ---------------------------------------------------------------------------
// Criterion 2

fn c2_solver_order(_: &mut Context) -> Result<Verdict> {
    let start = Instant::now();
    let sched = sched();
    // u = c g x turns the flow into dx/dt = (1 + c) beta(t) x / 2, solvable in closed form.
    let c = -0.4;
    let control = ScaledIdentityControl {
        dim: 2,
        factor: c,
        schedule: sched,
    };
    let growth = exp(0.5 * (1.0 + c) * sched.g2_integral(0.0, sched.horizon()));
    let x0 = sample_prior(64, 2, &mut seeded_rng(1, 0));
    let mut errs = Vec::new();
    for k in [16, 32, 64, 128] {
        let x = sample_multi_step(&control, &sched, k, 64, &mut seeded_rng(1, 0))?;
        errs.push(
            x.data()
                .iter()
                .zip(x0.data())
                .map(|(a, b)| (a - growth * b).abs())
                .fold(0.0, f64::max),
        );
    }
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    let secs = start.elapsed().as_secs_f64();
    let pass = ratios.iter().all(|r| (1.7..=2.3).contains(r)) && secs < 10.0;
    Ok(Verdict::new(
        pass,
        format!("error ratios {ratios:.3?} (in [1.7, 2.3]), {secs:.2} s (< 10 s)"),
    ))
}

// ---------------------------------------------------------------------------
// Criterion 3

fn c3_invariances(_: &mut Context) -> Result<Verdict> {
    let start = Instant::now();
    let mut net = ControlNet::new(NetConfig::with_reference(2, sched()), &mut seeded_rng(1, 0))?;
    perturb(&mut net, 0.1, 3);
    let grid = TimeGrid::new(16, 1.0)?;
    let mut rng = seeded_rng(2, 0);
    let x0 = sample_prior(64, 2, &mut rng);
    let path = simulate_sde(&net, &sched(), &grid, x0, &mut rng)?;
    let base = GmmTarget::grid9();
    let t0 = rn_terms(&path, &net, &sched(), &base)?;
    let (lv0, kl0) = (lv_loss(&t0)?.value, kl_objective(&t0)?.value);
    let z0 = estimate_log_z(&net, &sched(), &grid, &base, 200, &mut seeded_rng(3, 0))?.value;
    let mut worst = 0.0f64;
    for c in [0.1f64, 10.0] {
        let scaled = Scaled {
            inner: GmmTarget::grid9(),
            log_c: ln(c),
        };
        let t = rn_terms(&path, &net, &sched(), &scaled)?;
        let z = estimate_log_z(&net, &sched(), &grid, &scaled, 200, &mut seeded_rng(3, 0))?.value;
        worst = worst
            .max((lv_loss(&t)?.value - lv0).abs())
            .max((kl_objective(&t)?.value - kl0 + ln(c)).abs())
            .max((z - z0 - ln(c)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(Verdict::new(
        worst <= 1e-10 && secs < 5.0,
        format!("max deviation {worst:.1e} (≤ 1e-10), {secs:.2} s (< 5 s)"),
    ))
}

// ---------------------------------------------------------------------------
// Criterion 4

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..n {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

fn sq_dist(x: &Tensor, i: usize, y: &Tensor, j: usize) -> f64 {
    x.row(i)
        .iter()
        .zip(y.row(j))
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn c4_sinkhorn_oracle(_: &mut Context) -> Result<Verdict> {
    let start = Instant::now();
    let cfg = SinkhornConfig::default();
    let (mut worst_rel, mut worst_identity) = (0.0f64, 0.0f64);
    for n in [3usize, 4] {
        for seed in 0..20 {
            let mut rng = seeded_rng(seed, 0xA0 + n as u64);
            let mut set = || Tensor::from_fn(n, 2, |_, _| rng.random_range(-3.0..3.0));
            let (x, y) = (set(), set());
            let exact = permutations(n)
                .iter()
                .map(|p| {
                    p.iter()
                        .enumerate()
                        .map(|(i, &j)| sq_dist(&x, i, &y, j))
                        .sum::<f64>()
                        / n as f64
                })
                .fold(f64::INFINITY, f64::min);
            let r = sinkhorn_distance(&x, &y, &cfg)?;
            worst_rel = worst_rel.max((r.cost - exact).abs() / exact);
            worst_identity = worst_identity.max(sinkhorn_distance(&x, &x, &cfg)?.cost.abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_rel <= 0.05 && worst_identity <= 1e-6 && secs < 30.0;
    Ok(Verdict::new(
        pass,
        format!("max rel. gap to exact OT {worst_rel:.2e} (≤ 5%), identity cost {worst_identity:.1e} (≤ 1e-6), {secs:.2} s (< 30 s)"),
    ))
}

// ---------------------------------------------------------------------------
// Criterion 7

fn c7_overhead(_: &mut Context) -> Result<Verdict> {
    let start = Instant::now();
    let target = GmmTarget::grid9();
    let cfg = |lambda_sc| TrainConfig {
        iterations: 5,
        batch: 16,
        steps: 128,
        lambda_sc,
        seed: 3,
        ..TrainConfig::default()
    };
    let mut dis = SamplerTrainer::new(&target, sched(), cfg(0.0))?;
    let mut scds = SamplerTrainer::new(&target, sched(), cfg(1.0))?;
    let (mut prev_dis, mut prev_scds) = (0, 0);
    let mut extras = Vec::new();
    for _ in 0..5 {
        let (StepOutcome::Updated(a), StepOutcome::Updated(b)) =
            (dis.step(&NoClock)?, scds.step(&NoClock)?)
        else {
            return Ok(Verdict::new(
                false,
                "numeric failure during the instrumented steps",
            ));
        };
        extras.push(i64::try_from(b.nfe_cum - prev_scds)? - i64::try_from(a.nfe_cum - prev_dis)?);
        (prev_dis, prev_scds) = (a.nfe_cum, b.nfe_cum);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = extras.iter().all(|&e| e == 3) && secs < 60.0;
    Ok(Verdict::new(
        pass,
        format!("extra evaluations per iteration {extras:?} (all 3), {secs:.2} s (< 60 s)"),
    ))
}

// ---------------------------------------------------------------------------
// Criterion 10

fn c10_reductions(_: &mut Context) -> Result<Verdict> {
    let start = Instant::now();
    let mut net = ControlNet::new(NetConfig::with_reference(2, sched()), &mut seeded_rng(4, 0))?;
    perturb(&mut net, 0.1, 4);
    let single = sample_single_step(&net, &sched(), 200, &mut seeded_rng(5, 0))?;
    let multi = sample_multi_step(&net, &sched(), 1, 200, &mut seeded_rng(5, 0))?;
    let one_step = single.data() == multi.data();

    let dir = tempfile::tempdir()?;
    let cfg = RunConfig {
        iterations: 5,
        batch: 64,
        steps: 16,
        seed: 9,
        eval_every: 0,
        wall_clock: false,
        ..RunConfig::default()
    };
    let target = GmmTarget::grid9();
    let mut csv = Vec::new();
    for (algo, lambda_sc) in [(Algo::Dis, 1.0), (Algo::Scds, 0.0)] {
        let path = dir.path().join(format!("{lambda_sc}.csv"));
        let mut writer = MetricsWriter::create(&path)?;
        let cfg = RunConfig {
            lambda_sc,
            ..cfg.clone()
        };
        pipeline::train(
            algo,
            &target,
            "gmm",
            &cfg,
            &NoClock,
            |r| Ok(writer.write(r)?),
            |_| Ok(()),
        )?;
        writer.finish()?;
        csv.push(std::fs::read(&path)?);
    }
    let same_csv = csv[0] == csv[1];

    let mut boundary = true;
    for seed in 0..5 {
        let mut net = ControlNet::new(
            NetConfig::with_reference(2, sched()),
            &mut seeded_rng(seed, 0),
        )?;
        perturb(&mut net, 1.0, seed + 10);
        let head = ConsistencyHead::new(net, 1.0, 1.0 / 128.0)?;
        let x = sample_prior(32, 2, &mut seeded_rng(seed, 1));
        boundary &= head.forward(&x, TimeArg::Shared(1.0))?.data() == x.data();
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = one_step && same_csv && boundary && secs < 60.0;
    Ok(Verdict::new(
        pass,
        format!("K=1 bitwise {one_step}, metrics CSV identical {same_csv}, f(x,T)=x {boundary}, {secs:.2} s (< 60 s)"),
    ))
}

// ---------------------------------------------------------------------------
// Full-size runs (criteria 5, 6, 8, 9)

/// Bookkeeping stored next to each cached checkpoint.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct RunRecord {
    train_seconds: f64,
    skipped: usize,
    all_finite: bool,
}

struct Context {
    cache: PathBuf,
    runs: BTreeMap<String, (Checkpoint, RunRecord)>,
    sinkhorn: BTreeMap<(String, usize), f64>,
}

/// Samples per NFE for coverage, and per side for the Sinkhorn distance.
const EVAL_N: usize = 10_000;
const SINKHORN_N: usize = 2048;
const EVAL_SEED: u64 = 0;

enum Job<'a> {
    Train(Algo, &'a dyn TargetDensity, RunConfig),
    Distill(&'a str, RunConfig),
}

impl Context {
    fn new(cache: PathBuf) -> Self {
        Self {
            cache,
            runs: BTreeMap::new(),
            sinkhorn: BTreeMap::new(),
        }
    }

    /// Trains (or loads from the cache) the run called `key`.
    fn run(&mut self, key: &str, job: Job<'_>) -> Result<(Checkpoint, RunRecord)> {
        if let Some(hit) = self.runs.get(key) {
            return Ok(hit.clone());
        }
        let (ckpt_path, record_path) = (
            self.cache.join(format!("{key}.ckpt")),
            self.cache.join(format!("{key}.json")),
        );
        let entry = if ckpt_path.exists() && record_path.exists() {
            eprintln!("[acceptance] using cached run {}", ckpt_path.display());
            (
                Checkpoint::load(&ckpt_path)?,
                serde_json::from_str(&std::fs::read_to_string(&record_path)?)?,
            )
        } else {
            eprintln!(
                "[acceptance] training {key} (cache: {})",
                self.cache.display()
            );
            let (clock, started) = (WallClock::start(), Instant::now());
            let (ckpt, records, skipped) = match job {
                Job::Train(algo, target, cfg) => {
                    let (ckpt, out) =
                        pipeline::train(algo, target, key, &cfg, &clock, |_| Ok(()), |_| Ok(()))?;
                    (ckpt, out.records, out.skipped)
                }
                Job::Distill(teacher, cfg) => {
                    let (teacher, _) = self
                        .runs
                        .get(teacher)
                        .cloned()
                        .ok_or_else(|| anyhow!("teacher {teacher} not trained"))?;
                    let (ckpt, out) = pipeline::distill(&teacher, &cfg, &clock, |_| Ok(()))?;
                    (ckpt, out.records, out.skipped)
                }
            };
            let record = RunRecord {
                train_seconds: started.elapsed().as_secs_f64(),
                skipped,
                all_finite: records.iter().all(|r| {
                    r.loss_s.is_finite() && r.loss_sc.is_finite() && r.grad_norm.is_finite()
                }),
            };
            std::fs::create_dir_all(&self.cache)?;
            ckpt.save(&ckpt_path)?;
            std::fs::write(&record_path, serde_json::to_string_pretty(&record)?)?;
            (ckpt, record)
        };
        self.runs.insert(key.to_string(), entry.clone());
        Ok(entry)
    }

    fn sinkhorn(
        &mut self,
        key: &str,
        ckpt: &Checkpoint,
        nfe: usize,
        target: &dyn TargetDensity,
    ) -> Result<f64> {
        if let Some(&v) = self.sinkhorn.get(&(key.to_string(), nfe)) {
            return Ok(v);
        }
        let x = pipeline::draw_samples(ckpt, nfe, SINKHORN_N, EVAL_SEED, false)?;
        let v = sinkhorn_to_reference(&x, target)?;
        self.sinkhorn.insert((key.to_string(), nfe), v);
        Ok(v)
    }
}

fn sinkhorn_to_reference(x: &Tensor, target: &dyn TargetDensity) -> Result<f64> {
    let reference = target.gt_sample(SINKHORN_N, &mut seeded_rng(EVAL_SEED, STREAM_REFERENCE))?;
    Ok(sinkhorn_distance(x, &reference, &SinkhornConfig::default())?.cost)
}

/// Sinkhorn distance between two independent exact sample sets: the best
/// value any sampler can be expected to reach at this sample size.
fn floor(target: &dyn TargetDensity) -> Result<f64> {
    let x = target.gt_sample(SINKHORN_N, &mut seeded_rng(EVAL_SEED + 1, STREAM_REFERENCE))?;
    sinkhorn_to_reference(&x, target)
}

fn full_config(iterations: usize) -> RunConfig {
    RunConfig {
        iterations,
        eval_every: 0,
        ..RunConfig::default()
    }
}

fn gmm_runs(ctx: &mut Context) -> Result<[(Checkpoint, RunRecord); 3]> {
    let target = GmmTarget::grid9();
    let dis = ctx.run("gmm-dis", Job::Train(Algo::Dis, &target, full_config(5000)))?;
    let scds = ctx.run(
        "gmm-scds",
        Job::Train(Algo::Scds, &target, full_config(5000)),
    )?;
    let cdds = ctx.run("gmm-cdds", Job::Distill("gmm-dis", full_config(5000)))?;
    Ok([dis, scds, cdds])
}

fn c5_gmm(ctx: &mut Context) -> Result<Verdict> {
    let target = GmmTarget::grid9();
    let [(dis, dis_rec), (scds, scds_rec), (cdds, cdds_rec)] = gmm_runs(ctx)?;
    let dis128 = ctx.sinkhorn("gmm-dis", &dis, 128, &target)?;
    let scds1 = ctx.sinkhorn("gmm-scds", &scds, 1, &target)?;
    let cdds1 = ctx.sinkhorn("gmm-cdds", &cdds, 1, &target)?;
    let x = pipeline::draw_samples(&scds, 1, EVAL_N, EVAL_SEED, false)?;
    let coverage = mode_coverage(&x, &target.modes().unwrap(), 0.005)?;
    let minutes = [
        dis_rec.train_seconds,
        scds_rec.train_seconds,
        cdds_rec.train_seconds,
    ]
    .map(|s| s / 60.0);
    let checks = [
        dis128 < 0.10,
        scds1 < 0.20,
        (coverage - 1.0).abs() < 1e-12,
        cdds1 <= 2.0 * dis128 + 0.05,
        minutes.iter().all(|&m| m <= 30.0),
    ];
    Ok(Verdict::new(
        checks.iter().all(|&c| c),
        format!(
            "DIS@128 {dis128:.4} (< 0.10), SCDS@1 {scds1:.4} (< 0.20), SCDS coverage {:.0}/9, CDDS@1 {cdds1:.4} (≤ {:.4}), \
             train minutes DIS/SCDS/CDDS {:.1}/{:.1}/{:.1} (≤ 30); exact-vs-exact floor {:.4}",
            coverage * 9.0,
            2.0 * dis128 + 0.05,
            minutes[0],
            minutes[1],
            minutes[2],
            floor(&target)?
        ),
    ))
}

fn c6_single_step(ctx: &mut Context) -> Result<Verdict> {
    let target = GmmTarget::grid9();
    let [(dis, _), (scds, _), _] = gmm_runs(ctx)?;
    // The DIS checkpoint samples with its step-size input fixed at T / steps.
    let dis1 = ctx.sinkhorn("gmm-dis", &dis, 1, &target)?;
    let scds1 = ctx.sinkhorn("gmm-scds", &scds, 1, &target)?;
    Ok(Verdict::new(
        dis1 > scds1,
        format!("DIS@1 {dis1:.4} > SCDS@1 {scds1:.4}"),
    ))
}

fn c8_mw54(ctx: &mut Context) -> Result<Verdict> {
    let target = builtin("mw54", 8, 0)?;
    let (scds, rec) = ctx.run(
        "mw54-scds",
        Job::Train(Algo::Scds, target.as_ref(), full_config(5000)),
    )?;
    let x = pipeline::draw_samples(&scds, 128, EVAL_N, EVAL_SEED, false)?;
    let modes = target.modes().unwrap();
    let coverage = mode_coverage(&x, &modes, 0.005)?;
    let covered = (coverage * modes.len() as f64).round();
    let sk = ctx.sinkhorn("mw54-scds", &scds, 128, target.as_ref())?;
    let minutes = rec.train_seconds / 60.0;
    let pass = covered as usize == modes.len() && sk < 0.5 && minutes <= 45.0;
    Ok(Verdict::new(
        pass,
        format!(
            "modes covered {covered}/{} (all), Sinkhorn@128 {sk:.4} (< 0.5), train minutes {minutes:.1} (≤ 45); exact-vs-exact floor {:.4}",
            modes.len(),
            floor(target.as_ref())?
        ),
    ))
}

fn c9_lgcp(ctx: &mut Context) -> Result<Verdict> {
    const N: usize = 2000;
    let target = builtin("lgcp", 8, 0)?;
    let sched = sched();
    let (scds, rec) = ctx.run(
        "lgcp-scds",
        Job::Train(Algo::Scds, target.as_ref(), full_config(2000)),
    )?;
    let (dis, _) = ctx.run(
        "lgcp-dis",
        Job::Train(Algo::Dis, target.as_ref(), full_config(2000)),
    )?;

    let Model::Sampler(dis_net) = &dis.model else {
        unreachable!()
    };
    let long = FixedD {
        net: dis_net,
        d: dis_net.horizon() / dis.meta.steps as f64,
    };
    let grid = TimeGrid::new(4096, sched.horizon())?;
    let reference = estimate_log_z(
        &long,
        &sched,
        &grid,
        target.as_ref(),
        N,
        &mut seeded_rng(EVAL_SEED, STREAM_LOG_Z),
    )?;

    let Model::Sampler(net) = &scds.model else {
        unreachable!()
    };
    let nfes = [1usize, 2, 4, 8, 16, 32, 64, 128];
    let mut estimates = Vec::new();
    for &nfe in &nfes {
        let grid = TimeGrid::new(nfe, sched.horizon())?;
        estimates.push(estimate_log_z(
            net,
            &sched,
            &grid,
            target.as_ref(),
            N,
            &mut seeded_rng(EVAL_SEED, STREAM_LOG_Z),
        )?);
    }
    let finite = estimates
        .iter()
        .all(|e| e.value.is_finite() && e.se.is_finite());
    let last = estimates.last().unwrap();
    let se_ok = last.se < 0.05 * last.value.abs();
    let gaps: Vec<f64> = estimates
        .iter()
        .map(|e| (e.value - reference.value).abs())
        .collect();
    let windowed: Vec<f64> = gaps
        .windows(3)
        .map(|w| w.iter().sum::<f64>() / 3.0)
        .collect();
    let monotone = windowed.windows(2).all(|w| w[1] <= w[0]);
    let minutes = rec.train_seconds / 60.0;
    let clean = rec.all_finite && rec.skipped == 0;
    let pass = clean && finite && se_ok && monotone && minutes <= 30.0;
    Ok(Verdict::new(
        pass,
        format!(
            "NaN-free training {clean}, log Z@128 {:.3} ± {:.3} (SE < 5%: {se_ok}), reference {:.3} ± {:.3}, \
             |gap| by NFE {gaps:.3?}, windowed means non-increasing {monotone}, train minutes {minutes:.1} (≤ 30)",
            last.value, last.se, reference.value, reference.se
        ),
    ))
}
