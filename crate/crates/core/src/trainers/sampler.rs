use alloc::vec::Vec;

use super::{
    Clock, FailurePolicy, IterRecord, StepOutcome, STREAM_INIT, STREAM_LADDER, STREAM_SIM,
};
use crate::diffcore::{Gradients, Tensor};
use crate::dynamics::{brownian_increments, sample_d_t, sample_prior, Schedule, TimeGrid};
use crate::error::{contract_err, Result};
use crate::losses::{lv_loss, sc_loss, simulate_with_graph};
use crate::nets::{AdamConfig, AdamState, ControlNet, NetConfig, TimeArg};
use crate::targets::TargetDensity;
use crate::Rng;

/// Settings shared by the sampler trainers.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch: usize,
    /// Number of SDE steps `N` (a power of two).
    pub steps: usize,
    pub adam: AdamConfig,
    /// Weight of the log-variance sampling loss.
    pub lambda_s: f64,
    /// Weight of the self-consistency loss; zero trains the base sampler.
    pub lambda_sc: f64,
    /// Noise multiplier of the training trajectories at the first
    /// iteration (1 simulates the current control as is). Wider paths keep
    /// distant modes in view; the log-variance loss stays valid because
    /// it is evaluated on the recorded increments.
    pub explore: f64,
    /// Fraction of `iterations` over which `explore` decays linearly to 1
    /// (0 keeps it constant).
    pub explore_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            batch: 512,
            steps: 128,
            adam: AdamConfig::default(),
            lambda_s: 1.0,
            lambda_sc: 1.0,
            explore: 1.0,
            explore_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch < 2 {
            return Err(contract_err!("batch must be at least 2"));
        }
        if self.steps < 2 || !self.steps.is_power_of_two() {
            return Err(contract_err!(
                "steps must be a power of two >= 2, got {}",
                self.steps
            ));
        }
        if !(self.lambda_s >= 0.0 && self.lambda_sc >= 0.0) {
            return Err(contract_err!("loss weights must be non-negative"));
        }
        if !(self.explore >= 1.0 && (0.0..=1.0).contains(&self.explore_decay)) {
            return Err(contract_err!(
                "explore must be >= 1 and explore_decay in [0, 1]"
            ));
        }
        Ok(())
    }

    /// Trajectory noise multiplier used at 1-based iteration `iter`.
    pub fn explore_at(&self, iter: usize) -> f64 {
        if self.explore_decay == 0.0 {
            return self.explore;
        }
        let span = self.explore_decay * self.iterations as f64;
        let left = (1.0 - (iter - 1) as f64 / span).max(0.0);
        1.0 + (self.explore - 1.0) * left
    }
}

/// Trained network plus its metrics trace.
#[derive(Clone, Debug)]
pub struct TrainOutput<N> {
    pub model: N,
    pub records: Vec<IterRecord>,
    /// Iterations whose update was skipped after a numeric failure.
    pub skipped: usize,
}

/// Trains `u(x, t, d)` with the log-variance loss at `d = T/N` and, when
/// `lambda_sc > 0`, the self-consistency loss on ladder draws.
pub struct SamplerTrainer<'a> {
    net: ControlNet,
    sched: Schedule,
    grid: TimeGrid,
    target: &'a dyn TargetDensity,
    cfg: TrainConfig,
    opt: AdamState,
    grads: Gradients,
    rng_sim: Rng,
    rng_ladder: Rng,
    iter: usize,
    failures: FailurePolicy,
}

impl<'a> SamplerTrainer<'a> {
    /// Fresh network initialized from `cfg.seed`.
    pub fn new(target: &'a dyn TargetDensity, sched: Schedule, cfg: TrainConfig) -> Result<Self> {
        let net_cfg = NetConfig::with_reference(target.dim(), sched);
        let net = ControlNet::new(net_cfg, &mut crate::seeded_rng(cfg.seed, STREAM_INIT))?;
        Self::from_net(net, target, sched, cfg)
    }

    /// Continues training an existing network.
    pub fn from_net(
        net: ControlNet,
        target: &'a dyn TargetDensity,
        sched: Schedule,
        cfg: TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if net.dim() != target.dim() {
            return Err(contract_err!(
                "network dim {} vs target dim {}",
                net.dim(),
                target.dim()
            ));
        }
        let grid = TimeGrid::new(cfg.steps, sched.horizon())?;
        let opt = AdamState::new(cfg.adam.clone(), net.params());
        let grads = Gradients::zeros_like(net.params());
        Ok(Self {
            rng_sim: crate::seeded_rng(cfg.seed, STREAM_SIM),
            rng_ladder: crate::seeded_rng(cfg.seed, STREAM_LADDER),
            net,
            sched,
            grid,
            target,
            cfg,
            opt,
            grads,
            iter: 0,
            failures: FailurePolicy::default(),
        })
    }

    pub fn net(&self) -> &ControlNet {
        &self.net
    }

    pub fn into_net(self) -> ControlNet {
        self.net
    }

    pub fn iterations_done(&self) -> usize {
        self.iter
    }

    fn try_step(&mut self) -> Result<(f64, f64, f64)> {
        let (batch, dim) = (self.cfg.batch, self.net.dim());
        let x0 = sample_prior(batch, dim, &mut self.rng_sim);
        let mut increments = brownian_increments(&self.grid, batch, dim, &mut self.rng_sim);
        let c = self.cfg.explore_at(self.iter);
        if c != 1.0 {
            for dw in &mut increments {
                dw.data_mut().iter_mut().for_each(|v| *v *= c);
            }
        }
        let graph = simulate_with_graph(
            &self.net,
            &self.sched,
            &self.grid,
            self.target,
            x0,
            increments,
        )?;
        let lv = lv_loss(&graph.terms)?;
        self.grads.zero();
        if self.cfg.lambda_s > 0.0 {
            graph.backward(&lv, self.cfg.lambda_s, &mut self.grads)?;
        }
        let mut loss_sc = 0.0;
        if self.cfg.lambda_sc > 0.0 {
            let mut ts = Vec::with_capacity(batch);
            let mut ds = Vec::with_capacity(batch);
            let mut x_t = Tensor::zeros(&[batch, dim]);
            for i in 0..batch {
                let draw = sample_d_t(&self.grid, &mut self.rng_ladder)?;
                ts.push(draw.t);
                ds.push(draw.d);
                x_t.row_mut(i)
                    .copy_from_slice(graph.path.states[draw.node].row(i));
            }
            drop(graph);
            let sc = sc_loss(
                &self.net,
                &self.sched,
                &x_t,
                TimeArg::PerRow(&ts),
                TimeArg::PerRow(&ds),
            )?;
            sc.backward(self.cfg.lambda_sc, &mut self.grads)?;
            loss_sc = sc.value;
        }
        let norm = self.opt.step(self.net.params_mut(), &mut self.grads)?;
        Ok((lv.value, loss_sc, norm))
    }

    /// Runs one iteration; numeric failures skip the update.
    pub fn step(&mut self, clock: &dyn Clock) -> Result<StepOutcome> {
        self.iter += 1;
        let result = self.try_step();
        Ok(match self.failures.handle(result)? {
            Ok((loss_s, loss_sc, grad_norm)) => StepOutcome::Updated(IterRecord {
                iter: self.iter,
                loss_s,
                loss_sc,
                grad_norm,
                nfe_cum: self.net.nfe(),
                wall_ms: clock.elapsed_ms(),
            }),
            Err(e) => StepOutcome::Skipped(e),
        })
    }

    /// Runs the remaining iteration budget, reporting each record.
    pub fn run(
        mut self,
        clock: &dyn Clock,
        mut on_record: impl FnMut(&IterRecord),
    ) -> Result<TrainOutput<ControlNet>> {
        let mut records = Vec::with_capacity(self.cfg.iterations);
        let mut skipped = 0;
        while self.iter < self.cfg.iterations {
            match self.step(clock)? {
                StepOutcome::Updated(r) => {
                    on_record(&r);
                    records.push(r);
                }
                StepOutcome::Skipped(_) => skipped += 1,
            }
        }
        Ok(TrainOutput {
            model: self.net,
            records,
            skipped,
        })
    }
}

/// Base sampler: log-variance loss only.
pub fn train_dis(
    target: &dyn TargetDensity,
    sched: Schedule,
    cfg: &TrainConfig,
    clock: &dyn Clock,
) -> Result<TrainOutput<ControlNet>> {
    let cfg = TrainConfig {
        lambda_sc: 0.0,
        ..cfg.clone()
    };
    SamplerTrainer::new(target, sched, cfg)?.run(clock, |_| {})
}

/// Joint log-variance and self-consistency training.
pub fn train_scds(
    target: &dyn TargetDensity,
    sched: Schedule,
    cfg: &TrainConfig,
    clock: &dyn Clock,
) -> Result<TrainOutput<ControlNet>> {
    SamplerTrainer::new(target, sched, cfg.clone())?.run(clock, |_| {})
}
