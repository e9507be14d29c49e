use crate::error::{contract_err, Result};

/// Uniform grid of `N` steps on `[0, T]`: nodes `k T / N` for `k = 0..=N`.
///
/// The step `T / N` is also the base of the step-size ladder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    steps: usize,
    horizon: f64,
}

impl TimeGrid {
    pub fn new(steps: usize, horizon: f64) -> Result<Self> {
        if steps == 0 || !steps.is_power_of_two() {
            return Err(contract_err!(
                "step count must be a power of two, got {}",
                steps
            ));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(contract_err!("horizon must be positive, got {}", horizon));
        }
        Ok(Self { steps, horizon })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Step size `T / N`.
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Time of node `k`, exact at both ends.
    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|k| self.node(k))
    }
}
