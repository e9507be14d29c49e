use rand::{Rng as _, RngCore};

use super::TimeGrid;
use crate::error::{contract_err, Result};

/// A draw from the step-size ladder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DtDraw {
    /// Step size `2^m T / N`.
    pub d: f64,
    /// Start time `j * 2d`.
    pub t: f64,
    /// Exponent `m`.
    pub exponent: u32,
    /// Grid node of `t`, i.e. `j * 2^(m+1)`.
    pub node: usize,
}

/// Draws `m` uniform on `{0, .., log2(N) - 1}`, then `j` uniform on
/// `{0, .., N / 2^(m+1) - 1}`; returns `d = 2^m T/N` and `t = 2 j d`.
///
/// Every draw satisfies `t + 2d <= T` with `T - t` a multiple of `2d`.
pub fn sample_d_t(grid: &TimeGrid, rng: &mut dyn RngCore) -> Result<DtDraw> {
    let n = grid.steps();
    if n < 2 {
        return Err(contract_err!(
            "the step ladder needs at least two grid steps"
        ));
    }
    let levels = n.trailing_zeros();
    let m = rng.random_range(0..levels);
    let stride = 1usize << (m + 1);
    let j = rng.random_range(0..n / stride);
    let node = j * stride;
    Ok(DtDraw {
        d: (1usize << m) as f64 * grid.dt(),
        t: grid.node(node),
        exponent: m,
        node,
    })
}
