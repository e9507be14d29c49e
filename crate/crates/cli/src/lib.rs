//! Command-line front end for consistent diffusion samplers: checkpoints,
//! run configuration, file formats and the train / distill / sample /
//! benchmark workflows.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod formats;
pub mod pipeline;

use std::time::Instant;

use cds_core::trainers::Clock;

/// Milliseconds since construction.
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn elapsed_ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}
