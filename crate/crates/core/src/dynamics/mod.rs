//! Diffusion coefficients, time grids, Euler–Maruyama simulation of the
//! controlled generative SDE, Euler steps of its probability-flow ODE, and
//! the step-size ladder used by self-consistency training.
//!
//! Time runs from the prior at `t = 0` to the target at `t = T`. The VP
//! generative drift is `mu(t) x = +beta(t)/2 x`, the time reversal of the
//! noising process `-beta/2 x` that carries the target to `N(0, I)`; with the
//! optimal control `u = g grad log p_t` the process reaches the target.

mod control;
mod grid;
mod ladder;
mod ode;
mod schedule;
mod sde;

pub use control::{ConstantControl, Control, ScaledIdentityControl, ZeroControl};
pub use grid::TimeGrid;
pub use ladder::{sample_d_t, DtDraw};
pub use ode::{
    pf_euler, pf_euler_tape, pf_ode_step, shortcut_step, shortcut_step_tape, two_step_target,
};
pub use schedule::{Schedule, VpSchedule};
pub use sde::{
    brownian_increments, em_step, sample_prior, simulate_sde, simulate_sde_with_increments, SdePath,
};
