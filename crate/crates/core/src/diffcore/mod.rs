//! Dense row-major tensors with a reverse-mode tape.
//!
//! A [`Tape`] records one network evaluation; [`Tape::backward`] replays it
//! in reverse and accumulates parameter gradients into a [`Gradients`]
//! registry. Trajectory states never live on a tape, so tapes stay shallow.

mod gelu;
mod gradcheck;
pub mod kernels;
mod params;
mod real;
mod tape;
mod tensor;

pub use gelu::{gelu, gelu_with_derivative, std_normal_cdf_pdf};
pub use gradcheck::finite_difference_check;
pub use params::{Gradients, ParamId, ParamStore};
pub use real::Real;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
