//! Training objectives.
//!
//! Path-space objectives are functions of per-trajectory scalars `R`, `S`
//! and `B` (running cost, stochastic integral, endpoint log-ratio). States
//! and Brownian increments are fixed; gradients reach the parameters only
//! through the control evaluations inside `R` and `S`.

mod rn;
mod step_losses;

pub use rn::{
    kl_objective, lv_loss, rn_graph_from_path, rn_terms, simulate_with_graph, RnGraph, RnTerms,
    TrajectoryLoss,
};
pub use step_losses::{cd_loss, sc_loss, total_scds_loss, TapeLoss};
