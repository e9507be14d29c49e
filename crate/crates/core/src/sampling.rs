//! Drawing samples from trained models: few-step probability-flow ODE
//! integration with the step-size-conditioned control, full SDE simulation,
//! and one- or multi-step consistency sampling.

use alloc::vec::Vec;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::diffcore::Tensor;
use crate::dynamics::{em_step, pf_ode_step, sample_prior, Control, Schedule, TimeGrid};
use crate::error::{contract_err, Result};
use crate::math::{exp, sqrt};
use crate::nets::{ConsistencyHead, TimeArg};

fn check_steps(k: usize) -> Result<()> {
    if k == 0 {
        Err(contract_err!("number of steps must be at least 1"))
    } else {
        Ok(())
    }
}

/// Node `i` of a uniform `k`-step grid, with the last node exactly `horizon`.
fn node(horizon: f64, k: usize, i: usize) -> f64 {
    if i == k {
        horizon
    } else {
        horizon * i as f64 / k as f64
    }
}

/// `k` ODE steps of size `T/k`, each conditioned on `d = T/k`.
pub fn multi_step_from(
    control: &dyn Control,
    sched: &Schedule,
    k: usize,
    x0: Tensor,
) -> Result<Tensor> {
    check_steps(k)?;
    let horizon = sched.horizon();
    let d = horizon / k as f64;
    let mut x = x0;
    for i in 0..k {
        let t = node(horizon, k, i);
        let step = node(horizon, k, i + 1) - t;
        x = pf_ode_step(control, sched, &x, t, step, d)?;
    }
    Ok(x)
}

/// One ODE step across the whole horizon with `d = T` (one evaluation).
pub fn single_step_from(control: &dyn Control, sched: &Schedule, x0: Tensor) -> Result<Tensor> {
    multi_step_from(control, sched, 1, x0)
}

/// `n` samples with a single network evaluation.
pub fn sample_single_step(
    control: &dyn Control,
    sched: &Schedule,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<Tensor> {
    single_step_from(control, sched, sample_prior(n, control.dim(), rng))
}

/// `n` samples with `k` network evaluations.
pub fn sample_multi_step(
    control: &dyn Control,
    sched: &Schedule,
    k: usize,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<Tensor> {
    check_steps(k)?;
    multi_step_from(control, sched, k, sample_prior(n, control.dim(), rng))
}

/// Terminal states of the controlled SDE on `grid`, one evaluation per step.
///
/// Draws the same random numbers in the same order as
/// [`crate::dynamics::simulate_sde`] but keeps only the current state.
pub fn sample_sde(
    control: &dyn Control,
    sched: &Schedule,
    grid: &TimeGrid,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<Tensor> {
    let x0 = sample_prior(n, control.dim(), rng);
    sde_from(control, sched, grid, x0, rng)
}

pub(crate) fn sde_from(
    control: &dyn Control,
    sched: &Schedule,
    grid: &TimeGrid,
    x0: Tensor,
    rng: &mut dyn RngCore,
) -> Result<Tensor> {
    sde_fold(control, sched, grid, x0, rng, |_, _, _| {})
}

/// Streams an SDE simulation, calling `visit(t, u, dw)` at every step.
pub(crate) fn sde_fold(
    control: &dyn Control,
    sched: &Schedule,
    grid: &TimeGrid,
    x0: Tensor,
    rng: &mut dyn RngCore,
    mut visit: impl FnMut(f64, &Tensor, &Tensor),
) -> Result<Tensor> {
    let (rows, cols) = (x0.rows(), x0.cols());
    let dt = grid.dt();
    let scale = sqrt(dt);
    let mut x = x0;
    for k in 0..grid.steps() {
        let t = grid.node(k);
        let dw = Tensor::from_fn(rows, cols, |_, _| {
            let z: f64 = StandardNormal.sample(&mut *rng);
            scale * z
        });
        let u = control.eval(&x, TimeArg::Shared(t), TimeArg::Shared(dt))?;
        visit(t, &u, &dw);
        x = em_step(sched, &x, &u, t, dt, &dw)?;
    }
    Ok(x)
}

/// `f(x_0, 0)` for prior draws: one evaluation.
pub fn consistency_single_step(
    head: &ConsistencyHead,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<Tensor> {
    let x0 = sample_prior(n, head.trunk().dim(), rng);
    head.forward(&x0, TimeArg::Shared(0.0))
}

/// Multistep consistency sampling with `k` evaluations: after each jump to
/// the horizon, the sample is re-noised to the next time `i T / k` with the
/// exact VP transition kernel and mapped back with `f`.
///
/// Prior draws for all samples come first, then the re-noising draws.
pub fn consistency_multi_step(
    head: &ConsistencyHead,
    sched: &Schedule,
    k: usize,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<Tensor> {
    check_steps(k)?;
    let horizon = head.horizon();
    if (sched.horizon() - horizon).abs() > 1e-12 {
        return Err(contract_err!(
            "schedule horizon {} vs model horizon {}",
            sched.horizon(),
            horizon
        ));
    }
    let mut x = consistency_single_step(head, n, rng)?;
    for i in 1..k {
        let t = node(horizon, k, i);
        let a = exp(-sched.mu_integral(t, horizon));
        let s = sqrt((1.0 - a * a).max(0.0));
        for v in x.data_mut() {
            let z: f64 = StandardNormal.sample(&mut *rng);
            *v = a * *v + s * z;
        }
        x = head.forward(&x, TimeArg::Shared(t))?;
    }
    Ok(x)
}

/// Step counts `1, 2, 4, ..., max` for sweeps.
pub fn power_of_two_steps(max: usize) -> Vec<usize> {
    core::iter::successors(Some(1usize), |k| k.checked_mul(2))
        .take_while(|&k| k <= max)
        .collect()
}
