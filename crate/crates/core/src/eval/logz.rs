use alloc::vec;

use rand::RngCore;

use crate::dynamics::{sample_prior, Control, Schedule, TimeGrid};
use crate::error::{contract_err, dim_err, Error, Result};
use crate::math::{log_std_normal, sqrt};
use crate::sampling::sde_fold;
use crate::targets::TargetDensity;

/// Smallest trajectory count accepted by [`estimate_log_z`].
pub const MIN_LOG_Z_SAMPLES: usize = 100;

/// Monte Carlo estimate of `log Z` with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogZEstimate {
    pub value: f64,
    pub se: f64,
    pub n: usize,
}

/// Error of a `log Z` estimate; absolute when the reference is zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogZError {
    pub value: f64,
    pub absolute: bool,
}

/// `-mean(R + B)` over `n` fresh controlled-SDE trajectories on `grid`.
///
/// A lower-bound-style estimator: exact at the optimal control and biased
/// downwards otherwise.
pub fn estimate_log_z(
    control: &dyn Control,
    sched: &Schedule,
    grid: &TimeGrid,
    target: &dyn TargetDensity,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<LogZEstimate> {
    if n < MIN_LOG_Z_SAMPLES {
        return Err(contract_err!(
            "log Z estimation needs at least {} trajectories, got {}",
            MIN_LOG_Z_SAMPLES,
            n
        ));
    }
    if control.dim() != target.dim() {
        return Err(dim_err!(
            "control dim {} vs target dim {}",
            control.dim(),
            target.dim()
        ));
    }
    let dim = control.dim();
    let dt = grid.dt();
    let x0 = sample_prior(n, dim, rng);
    let mut y: alloc::vec::Vec<f64> = (0..n).map(|i| log_std_normal(x0.row(i))).collect();
    let mut running = vec![0.0; n];
    let x_t = sde_fold(control, sched, grid, x0, rng, |t, u, _| {
        let div = sched.mu(t) * dim as f64;
        for (i, r) in running.iter_mut().enumerate() {
            let sq: f64 = u.row(i).iter().map(|v| v * v).sum();
            *r += (0.5 * sq - div) * dt;
        }
    })?;
    let log_rho = target.log_rho(&x_t)?;
    for ((yi, r), lr) in y.iter_mut().zip(&running).zip(&log_rho) {
        *yi = r + (*yi - lr);
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("log Z estimator terms".into()));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    Ok(LogZEstimate {
        value: -mean,
        se: sqrt(var / n as f64),
        n,
    })
}

/// `|estimate - reference| / |reference|`, or the absolute error (flagged)
/// when the reference is zero.
pub fn log_z_rel_error(estimate: f64, reference: f64) -> LogZError {
    let gap = (estimate - reference).abs();
    if reference == 0.0 {
        LogZError {
            value: gap,
            absolute: true,
        }
    } else {
        LogZError {
            value: gap / reference.abs(),
            absolute: false,
        }
    }
}
