//! Training loops: the base diffusion sampler (log-variance only), the
//! jointly trained self-consistent sampler, and consistency distillation of
//! a trained sampler's probability-flow ODE.

mod distill;
mod sampler;

use crate::error::{Error, Result};

pub use distill::{distill_cdds, CddsTrainer, DistillConfig};
pub use sampler::{train_dis, train_scds, SamplerTrainer, TrainConfig, TrainOutput};

/// RNG stream for network initialization.
pub const STREAM_INIT: u64 = 0;
/// RNG stream for prior draws and Brownian increments.
pub const STREAM_SIM: u64 = 1;
/// RNG stream for step-size ladder draws.
pub const STREAM_LADDER: u64 = 2;
/// RNG stream for distillation prior draws and interval choices.
pub const STREAM_DISTILL: u64 = 3;

/// Consecutive numeric failures tolerated before a run is aborted.
pub const MAX_CONSECUTIVE_FAILURES: usize = 10;

/// One row of the training metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct IterRecord {
    /// 1-based optimizer iteration.
    pub iter: usize,
    /// Sampling (or distillation) loss.
    pub loss_s: f64,
    /// Self-consistency loss; zero when that branch is off.
    pub loss_sc: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    /// Cumulative batched network evaluations.
    pub nfe_cum: u64,
    /// Wall-clock milliseconds since the run started.
    pub wall_ms: f64,
}

/// Result of one training iteration.
#[derive(Clone, Debug)]
pub enum StepOutcome {
    Updated(IterRecord),
    /// A numeric failure skipped the update.
    Skipped(Error),
}

/// Source of elapsed wall-clock time; the core crate has no clock of its own.
pub trait Clock {
    fn elapsed_ms(&self) -> f64;
}

/// A clock that always reads zero, for reproducible traces.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn elapsed_ms(&self) -> f64 {
        0.0
    }
}

/// Tracks consecutive numeric failures.
#[derive(Clone, Debug, Default)]
struct FailurePolicy {
    consecutive: usize,
}

impl FailurePolicy {
    /// Turns numeric errors into skips until the limit is exceeded.
    fn handle<T>(&mut self, result: Result<T>) -> Result<core::result::Result<T, Error>> {
        match result {
            Ok(v) => {
                self.consecutive = 0;
                Ok(Ok(v))
            }
            Err(e @ Error::Numeric(_)) => {
                self.consecutive += 1;
                if self.consecutive >= MAX_CONSECUTIVE_FAILURES {
                    Err(Error::Diverged(self.consecutive))
                } else {
                    Ok(Err(e))
                }
            }
            Err(e) => Err(e),
        }
    }
}
