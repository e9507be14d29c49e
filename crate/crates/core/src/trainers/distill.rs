use alloc::vec::Vec;

use rand::Rng as _;

use super::{Clock, FailurePolicy, IterRecord, StepOutcome, TrainOutput, STREAM_DISTILL};
use crate::diffcore::{Gradients, Tensor};
use crate::dynamics::{sample_prior, Schedule};
use crate::error::{contract_err, Error, Result};
use crate::losses::cd_loss;
use crate::nets::{AdamConfig, AdamState, ConsistencyHead, ControlNet, TimeArg};
use crate::Rng;

/// Settings for consistency distillation.
#[derive(Clone, Debug, PartialEq)]
pub struct DistillConfig {
    pub iterations: usize,
    pub batch: usize,
    /// Fine Euler steps of the teacher ODE over the horizon.
    pub fine_steps: usize,
    /// Number of distillation time nodes, including both ends.
    pub nodes: usize,
    /// Scale of the skip/output parametrization.
    pub skip_scale: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            batch: 512,
            fine_steps: 128,
            nodes: 18,
            skip_scale: 1.0,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl DistillConfig {
    fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.fine_steps == 0 {
            return Err(contract_err!("batch and fine_steps must be positive"));
        }
        if self.nodes < 2 {
            return Err(contract_err!(
                "need at least 2 distillation nodes, got {}",
                self.nodes
            ));
        }
        Ok(())
    }
}

/// Distills a trained control network into a one-step consistency function.
///
/// Each iteration integrates the teacher's probability-flow ODE with fine
/// Euler steps from prior draws and reads off the (piecewise linear) Euler
/// trajectory at two adjacent distillation nodes per batch element.
pub struct CddsTrainer<'a> {
    teacher: &'a ControlNet,
    head: ConsistencyHead,
    sched: Schedule,
    cfg: DistillConfig,
    opt: AdamState,
    grads: Gradients,
    rng: Rng,
    iter: usize,
    failures: FailurePolicy,
}

impl<'a> CddsTrainer<'a> {
    /// Student initialized as a copy of the teacher.
    pub fn new(teacher: &'a ControlNet, sched: Schedule, cfg: DistillConfig) -> Result<Self> {
        cfg.validate()?;
        let fine = sched.horizon() / cfg.fine_steps as f64;
        let head = ConsistencyHead::from_teacher(teacher, cfg.skip_scale, fine)?;
        let opt = AdamState::new(cfg.adam.clone(), head.trunk().params());
        let grads = Gradients::zeros_like(head.trunk().params());
        Ok(Self {
            rng: crate::seeded_rng(cfg.seed, STREAM_DISTILL),
            teacher,
            head,
            sched,
            cfg,
            opt,
            grads,
            iter: 0,
            failures: FailurePolicy::default(),
        })
    }

    pub fn head(&self) -> &ConsistencyHead {
        &self.head
    }

    pub fn into_head(self) -> ConsistencyHead {
        self.head
    }

    fn node(&self, k: usize) -> f64 {
        if k == self.cfg.nodes - 1 {
            self.sched.horizon()
        } else {
            self.sched.horizon() * k as f64 / (self.cfg.nodes - 1) as f64
        }
    }

    fn fine_node(&self, j: usize) -> f64 {
        if j == self.cfg.fine_steps {
            self.sched.horizon()
        } else {
            self.sched.horizon() * j as f64 / self.cfg.fine_steps as f64
        }
    }

    /// Teacher Euler trajectory evaluated at the requested per-row times.
    fn teacher_states(&self, x0: Tensor, times: &[&[f64]]) -> Result<Vec<Tensor>> {
        let (rows, cols) = (x0.rows(), x0.cols());
        let h = self.sched.horizon() / self.cfg.fine_steps as f64;
        let mut out: Vec<Tensor> = times.iter().map(|_| Tensor::zeros(&[rows, cols])).collect();
        let mut pending: usize = times.iter().map(|t| t.len()).sum();
        let mut x = x0;
        for j in 0..self.cfg.fine_steps {
            let (tj, t_next) = (self.fine_node(j), self.fine_node(j + 1));
            let u = self
                .teacher
                .forward(&x, TimeArg::Shared(tj), TimeArg::Shared(h))?;
            let (mu, g) = (self.sched.mu(tj), self.sched.g(tj));
            for (slot, ts) in out.iter_mut().zip(times) {
                for (i, &t) in ts.iter().enumerate() {
                    if t >= tj && t < t_next {
                        let s = t - tj;
                        let (a, w) = (mu * s, 0.5 * g * s);
                        for ((o, &xv), &uv) in
                            slot.row_mut(i).iter_mut().zip(x.row(i)).zip(u.row(i))
                        {
                            *o = xv + a * xv + w * uv;
                        }
                        pending -= 1;
                    }
                }
            }
            if pending == 0 {
                break;
            }
            let (a, w) = (mu * h, 0.5 * g * h);
            for (xv, &uv) in x.data_mut().iter_mut().zip(u.data()) {
                *xv = *xv + a * *xv + w * uv;
            }
            if !x.is_finite() {
                return Err(Error::Numeric("teacher ODE state".into()));
            }
        }
        let horizon = self.sched.horizon();
        for (slot, ts) in out.iter_mut().zip(times) {
            for (i, &t) in ts.iter().enumerate() {
                if t >= horizon {
                    slot.row_mut(i).copy_from_slice(x.row(i));
                    pending -= 1;
                }
            }
        }
        debug_assert_eq!(pending, 0);
        if out.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numeric("teacher ODE state".into()));
        }
        Ok(out)
    }

    fn try_step(&mut self) -> Result<(f64, f64)> {
        let (batch, dim) = (self.cfg.batch, self.head.trunk().dim());
        let x0 = sample_prior(batch, dim, &mut self.rng);
        let ks: Vec<usize> = (0..batch)
            .map(|_| self.rng.random_range(0..self.cfg.nodes - 1))
            .collect();
        let t_n: Vec<f64> = ks.iter().map(|&k| self.node(k)).collect();
        let t_np1: Vec<f64> = ks.iter().map(|&k| self.node(k + 1)).collect();
        let states = self.teacher_states(x0, &[&t_n, &t_np1])?;
        let loss = cd_loss(
            &self.head,
            &states[0],
            TimeArg::PerRow(&t_n),
            &states[1],
            TimeArg::PerRow(&t_np1),
        )?;
        self.grads.zero();
        loss.backward(1.0, &mut self.grads)?;
        let norm = self
            .opt
            .step(self.head.trunk_mut().params_mut(), &mut self.grads)?;
        Ok((loss.value, norm))
    }

    /// Runs one iteration; numeric failures skip the update.
    pub fn step(&mut self, clock: &dyn Clock) -> Result<StepOutcome> {
        self.iter += 1;
        let result = self.try_step();
        Ok(match self.failures.handle(result)? {
            Ok((loss_s, grad_norm)) => StepOutcome::Updated(IterRecord {
                iter: self.iter,
                loss_s,
                loss_sc: 0.0,
                grad_norm,
                nfe_cum: self.head.trunk().nfe(),
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
    ) -> Result<TrainOutput<ConsistencyHead>> {
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
            model: self.head,
            records,
            skipped,
        })
    }
}

/// Consistency distillation of a trained sampler.
pub fn distill_cdds(
    teacher: &ControlNet,
    sched: Schedule,
    cfg: &DistillConfig,
    clock: &dyn Clock,
) -> Result<TrainOutput<ConsistencyHead>> {
    CddsTrainer::new(teacher, sched, cfg.clone())?.run(clock, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{pf_euler, VpSchedule};
    use crate::nets::NetConfig;
    use crate::trainers::NoClock;
    use alloc::vec;

    fn teacher() -> (ControlNet, Schedule) {
        let sched = Schedule::Vp(VpSchedule::default());
        let cfg = NetConfig {
            hidden: 8,
            depth: 2,
            fourier_features: 4,
            ..NetConfig::with_reference(2, sched)
        };
        (
            ControlNet::new(cfg, &mut crate::seeded_rng(1, 0)).unwrap(),
            sched,
        )
    }

    #[test]
    fn captures_match_the_euler_trajectory_on_fine_nodes() {
        let (net, sched) = teacher();
        let cfg = DistillConfig {
            fine_steps: 8,
            nodes: 3,
            batch: 4,
            ..DistillConfig::default()
        };
        let trainer = CddsTrainer::new(&net, sched, cfg).unwrap();
        let x0 = Tensor::from_fn(4, 2, |i, j| 0.3 * i as f64 - 0.2 * j as f64);
        let times = [0.0, 0.25, 0.5, 1.0];
        let got = trainer.teacher_states(x0.clone(), &[&times]).unwrap();
        let mut x = x0;
        let h = TimeArg::Shared(0.125);
        let mut expect = vec![x.row(0).to_vec()];
        for j in 0..8 {
            x = pf_euler(&net, &sched, &x, TimeArg::Shared(j as f64 * 0.125), h, h).unwrap();
            match j + 1 {
                2 => expect.push(x.row(1).to_vec()),
                4 => expect.push(x.row(2).to_vec()),
                8 => expect.push(x.row(3).to_vec()),
                _ => {}
            }
        }
        for i in 0..4 {
            for (a, b) in got[0].row(i).iter().zip(&expect[i]) {
                assert!((a - b).abs() < 1e-12, "row {i}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn partial_captures_interpolate_linearly() {
        let (net, sched) = teacher();
        let cfg = DistillConfig {
            fine_steps: 4,
            nodes: 3,
            batch: 1,
            ..DistillConfig::default()
        };
        let trainer = CddsTrainer::new(&net, sched, cfg).unwrap();
        let x0 = Tensor::from_fn(1, 2, |_, j| 0.5 - j as f64);
        let at = |t: f64| {
            trainer.teacher_states(x0.clone(), &[&[t]]).unwrap()[0]
                .row(0)
                .to_vec()
        };
        let (a, b, mid) = (at(0.25), at(0.5), at(0.375));
        for k in 0..2 {
            assert!((mid[k] - 0.5 * (a[k] + b[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn distillation_trains_only_the_student() {
        let (net, sched) = teacher();
        let before = net.params().clone();
        let cfg = DistillConfig {
            iterations: 2,
            batch: 8,
            fine_steps: 8,
            nodes: 5,
            ..DistillConfig::default()
        };
        let out = distill_cdds(&net, sched, &cfg, &NoClock).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(net.params(), &before);
        assert_ne!(out.model.trunk().params(), &before);
        assert!(out
            .records
            .iter()
            .all(|r| r.loss_s.is_finite() && r.loss_s >= 0.0));
        let again = distill_cdds(&net, sched, &cfg, &NoClock).unwrap();
        assert_eq!(out.records, again.records);
    }

    #[test]
    fn rejects_degenerate_configs() {
        let (net, sched) = teacher();
        assert!(CddsTrainer::new(
            &net,
            sched,
            DistillConfig {
                nodes: 1,
                ..DistillConfig::default()
            }
        )
        .is_err());
        assert!(CddsTrainer::new(
            &net,
            sched,
            DistillConfig {
                skip_scale: 0.0,
                ..DistillConfig::default()
            }
        )
        .is_err());
    }
}
