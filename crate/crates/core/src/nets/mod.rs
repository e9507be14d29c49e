//! The step-size-conditioned control network `u(x, t, d)`, the consistency
//! wrapper `f(x, t)` built on the same trunk, and the Adam optimizer.

mod adam;
mod consistency;
mod control;
mod embedding;

pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use consistency::ConsistencyHead;
pub use control::{ControlNet, NetConfig, TimeArg};
pub use embedding::FourierEmbedding;
