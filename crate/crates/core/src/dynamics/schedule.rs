use crate::error::{contract_err, Result};
use crate::math::sqrt;

/// Variance-preserving schedule in generative time.
///
/// `beta(t) = beta_max - (beta_max - beta_min) t / T`: the noising rate of
/// the forward process at time `T - t`, largest where the generative process
/// leaves the prior.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VpSchedule {
    pub beta_min: f64,
    pub beta_max: f64,
    pub horizon: f64,
}

impl Default for VpSchedule {
    fn default() -> Self {
        Self {
            beta_min: 0.05,
            beta_max: 10.0,
            horizon: 1.0,
        }
    }
}

impl VpSchedule {
    pub fn new(beta_min: f64, beta_max: f64, horizon: f64) -> Result<Self> {
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max.is_finite()) {
            return Err(contract_err!(
                "need 0 < beta_min <= beta_max, got {} and {}",
                beta_min,
                beta_max
            ));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(contract_err!("horizon must be positive, got {}", horizon));
        }
        Ok(Self {
            beta_min,
            beta_max,
            horizon,
        })
    }

    pub fn beta(&self, t: f64) -> f64 {
        self.beta_max - (self.beta_max - self.beta_min) * t / self.horizon
    }

    /// `int_a^b beta(s) ds`.
    pub fn beta_integral(&self, a: f64, b: f64) -> f64 {
        let slope = (self.beta_max - self.beta_min) / self.horizon;
        self.beta_max * (b - a) - 0.5 * slope * (b * b - a * a)
    }
}

/// Drift and diffusion coefficients of `dx = (mu(t) x + g(t) u) dt + g(t) dW`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Schedule {
    /// `mu = beta/2`, `g = sqrt(beta)`.
    Vp(VpSchedule),
    /// Time-constant coefficients, mostly for closed-form checks.
    Constant {
        drift: f64,
        diffusion: f64,
        horizon: f64,
    },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Vp(VpSchedule::default())
    }
}

impl Schedule {
    pub fn horizon(&self) -> f64 {
        match self {
            Schedule::Vp(s) => s.horizon,
            Schedule::Constant { horizon, .. } => *horizon,
        }
    }

    /// Linear drift coefficient `mu(t)`; `div(mu(t) x) = mu(t) * dim`.
    pub fn mu(&self, t: f64) -> f64 {
        match self {
            Schedule::Vp(s) => 0.5 * s.beta(t),
            Schedule::Constant { drift, .. } => *drift,
        }
    }

    /// Diffusion coefficient `g(t)`.
    pub fn g(&self, t: f64) -> f64 {
        match self {
            Schedule::Vp(s) => sqrt(s.beta(t)),
            Schedule::Constant { diffusion, .. } => *diffusion,
        }
    }

    /// `int_a^b mu(s) ds`, the log growth of the uncontrolled flow.
    pub fn mu_integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Schedule::Vp(s) => 0.5 * s.beta_integral(a, b),
            Schedule::Constant { drift, .. } => drift * (b - a),
        }
    }

    /// `int_a^b g(s)^2 ds`.
    pub fn g2_integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Schedule::Vp(s) => s.beta_integral(a, b),
            Schedule::Constant { diffusion, .. } => diffusion * diffusion * (b - a),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_squared_is_beta_and_ends_match_constants() {
        let s = VpSchedule::default();
        let sched = Schedule::Vp(s);
        for &t in &[0.0, 0.3, 1.0] {
            assert!((sched.g(t) * sched.g(t) - s.beta(t)).abs() < 1e-12);
            assert!((sched.mu(t) - 0.5 * s.beta(t)).abs() < 1e-15);
        }
        assert_eq!(s.beta(0.0), s.beta_max);
        assert!((s.beta(1.0) - s.beta_min).abs() < 1e-15);
    }

    #[test]
    fn integral_matches_trapezoid() {
        let s = VpSchedule::default();
        // beta is linear, so the trapezoid rule is exact.
        let (a, b) = (0.2, 0.7);
        let trap = 0.5 * (s.beta(a) + s.beta(b)) * (b - a);
        assert!((s.beta_integral(a, b) - trap).abs() < 1e-12);
    }

    #[test]
    fn default_mixes_the_uncontrolled_process() {
        let s = VpSchedule::default();
        assert!(crate::math::exp(-0.5 * s.beta_integral(0.0, 1.0)) < 0.1);
    }

    #[test]
    fn invalid_schedules_are_rejected() {
        assert!(VpSchedule::new(0.0, 1.0, 1.0).is_err());
        assert!(VpSchedule::new(2.0, 1.0, 1.0).is_err());
        assert!(VpSchedule::new(0.1, 1.0, 0.0).is_err());
    }
}
