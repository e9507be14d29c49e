//! Consistent diffusion samplers for unnormalized densities.
//!
//! The crate trains controlled diffusions that transport a truncated standard
//! normal prior onto a target density known only up to its normalizing
//! constant, and accelerates them to one-step samplers in two ways:
//!
//! * consistency distillation of a trained sampler's probability-flow ODE
//!   ([`trainers::CddsTrainer`]), and
//! * joint training of a step-size-conditioned control with a self-consistency
//!   objective ([`trainers::SamplerTrainer`] with `lambda_sc > 0`).
//!
//! Everything here is `no_std` + `alloc`; file formats, the CLI and wall-clock
//! timing live in the companion `cds` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod diffcore;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod losses;
pub mod math;
pub mod nets;
pub mod sampling;
pub mod targets;
pub mod trainers;

pub use error::{Error, Result};

/// Deterministic RNG used everywhere in the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Seeds an [`Rng`] on a given stream so independent consumers never share draws.
pub fn seeded_rng(seed: u64, stream: u64) -> Rng {
    use rand::SeedableRng;
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
