//! Evaluation: entropic optimal-transport cost between sample sets,
//! normalizing-constant estimation, and mode coverage.

mod assignment;
mod coverage;
mod logz;
mod sinkhorn;

pub use coverage::{mode_coverage, mode_shares};
pub use logz::{estimate_log_z, log_z_rel_error, LogZError, LogZEstimate, MIN_LOG_Z_SAMPLES};
pub use sinkhorn::{sinkhorn_distance, SinkhornConfig, SinkhornResult};
