use alloc::vec::Vec;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{Control, Schedule, TimeGrid};
use crate::diffcore::Tensor;
use crate::error::{dim_err, Error, Result};
use crate::math::{sqrt, PRIOR_TRUNCATION};
use crate::nets::TimeArg;

/// One simulated batch of trajectories.
#[derive(Clone, Debug)]
pub struct SdePath {
    pub grid: TimeGrid,
    /// `N + 1` states, `batch x dim` each; never part of any tape.
    pub states: Vec<Tensor>,
    /// `N` Brownian increments with variance `dt` per coordinate.
    pub increments: Vec<Tensor>,
    /// The `N` control values used at nodes `0..N`.
    pub controls: Vec<Tensor>,
}

impl SdePath {
    pub fn terminal(&self) -> &Tensor {
        self.states.last().expect("a path has at least one state")
    }

    pub fn initial(&self) -> &Tensor {
        &self.states[0]
    }

    pub fn batch(&self) -> usize {
        self.states[0].rows()
    }
}

/// Standard normal draws, each coordinate rejection-resampled into the
/// central `1 - 2e-4` mass.
pub fn sample_prior(batch: usize, dim: usize, rng: &mut dyn RngCore) -> Tensor {
    Tensor::from_fn(batch, dim, |_, _| loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= PRIOR_TRUNCATION {
            break z;
        }
    })
}

/// `N` increments `dW ~ N(0, dt I)`, drawn step by step, row-major.
pub fn brownian_increments(
    grid: &TimeGrid,
    batch: usize,
    dim: usize,
    rng: &mut dyn RngCore,
) -> Vec<Tensor> {
    let scale = sqrt(grid.dt());
    (0..grid.steps())
        .map(|_| {
            Tensor::from_fn(batch, dim, |_, _| {
                let z: f64 = StandardNormal.sample(rng);
                scale * z
            })
        })
        .collect()
}

/// Euler–Maruyama update `x + mu(t) x dt + g(t) u dt + g(t) dW`.
pub fn em_step(
    sched: &Schedule,
    x: &Tensor,
    u: &Tensor,
    t: f64,
    dt: f64,
    dw: &Tensor,
) -> Result<Tensor> {
    if u.shape() != x.shape() || dw.shape() != x.shape() {
        return Err(dim_err!(
            "state {:?}, control {:?}, noise {:?}",
            x.shape(),
            u.shape(),
            dw.shape()
        ));
    }
    let (mu, g) = (sched.mu(t), sched.g(t));
    let (a, b) = (mu * dt, g * dt);
    let mut out = x.clone();
    for (((o, &xv), &uv), &w) in out
        .data_mut()
        .iter_mut()
        .zip(x.data())
        .zip(u.data())
        .zip(dw.data())
    {
        *o = xv + a * xv + b * uv + g * w;
    }
    if !out.is_finite() {
        return Err(Error::Numeric("SDE state".into()));
    }
    Ok(out)
}

/// Simulates the controlled SDE from `x0` with fresh Brownian noise. The
/// control's step-size input is the grid step.
pub fn simulate_sde(
    control: &dyn Control,
    sched: &Schedule,
    grid: &TimeGrid,
    x0: Tensor,
    rng: &mut dyn RngCore,
) -> Result<SdePath> {
    let increments = brownian_increments(grid, x0.rows(), x0.cols(), rng);
    simulate_sde_with_increments(control, sched, grid, x0, increments)
}

/// Simulation driven by the given increments (zeros give the noiseless flow).
pub fn simulate_sde_with_increments(
    control: &dyn Control,
    sched: &Schedule,
    grid: &TimeGrid,
    x0: Tensor,
    increments: Vec<Tensor>,
) -> Result<SdePath> {
    if increments.len() != grid.steps() {
        return Err(dim_err!(
            "{} increments for {} steps",
            increments.len(),
            grid.steps()
        ));
    }
    let dt = grid.dt();
    let mut states = Vec::with_capacity(grid.steps() + 1);
    let mut controls = Vec::with_capacity(grid.steps());
    states.push(x0);
    for (n, dw) in increments.iter().enumerate() {
        let t = grid.node(n);
        let x = &states[n];
        let u = control.eval(x, TimeArg::Shared(t), TimeArg::Shared(dt))?;
        let next = em_step(sched, x, &u, t, dt, dw)?;
        controls.push(u);
        states.push(next);
    }
    Ok(SdePath {
        grid: *grid,
        states,
        increments,
        controls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ScaledIdentityControl, VpSchedule, ZeroControl};

    fn moments(x: &Tensor) -> (f64, f64) {
        let n = x.len() as f64;
        let mean = x.sum() / n;
        let var = x
            .data()
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn prior_is_truncated_and_standardized() {
        let mut rng = crate::seeded_rng(11, 0);
        let x = sample_prior(200_000, 5, &mut rng);
        assert!(x.data().iter().all(|v| v.abs() <= 3.7191));
        let (mean, var) = moments(&x);
        assert!(mean.abs() < 0.005, "{mean}");
        // Truncation removes about 0.1% of the variance.
        assert!((var - 0.99853).abs() < 0.01, "{var}");
        let again = sample_prior(3, 2, &mut crate::seeded_rng(11, 0));
        assert_eq!(again.data(), &x.data()[..6]);
    }

    #[test]
    fn increments_have_variance_dt() {
        let grid = TimeGrid::new(4, 1.0).unwrap();
        let mut rng = crate::seeded_rng(12, 0);
        let dw = brownian_increments(&grid, 50_000, 2, &mut rng);
        assert_eq!(dw.len(), 4);
        for w in &dw {
            let (_, var) = moments(w);
            assert!((var - 0.25).abs() < 0.01, "{var}");
        }
    }

    #[test]
    fn noiseless_uncontrolled_step_is_linear_growth() {
        let sched = Schedule::Vp(VpSchedule::default());
        let grid = TimeGrid::new(128, 1.0).unwrap();
        let x0 = Tensor::from_rows(&[alloc::vec![1.0, -2.0]]).unwrap();
        let zeros = (0..128).map(|_| Tensor::zeros(&[1, 2])).collect();
        let path =
            simulate_sde_with_increments(&ZeroControl { dim: 2 }, &sched, &grid, x0.clone(), zeros)
                .unwrap();
        let f = 1.0 + sched.mu(0.0) * grid.dt();
        assert!((path.states[1].data()[0] - f).abs() < 1e-15);
        assert!((path.states[1].data()[1] + 2.0 * f).abs() < 1e-15);
        assert_eq!(path.states.len(), 129);
        assert_eq!(path.controls.len(), 128);
    }

    #[test]
    fn uncontrolled_terminal_variance_matches_the_discrete_recursion() {
        // Constant beta: v_{n+1} = (1 + beta dt / 2)^2 v_n + beta dt.
        let beta = 1.5;
        let sched = Schedule::Vp(VpSchedule::new(beta, beta, 1.0).unwrap());
        let grid = TimeGrid::new(16, 1.0).unwrap();
        let mut rng = crate::seeded_rng(13, 0);
        let n = 100_000;
        let x0 = Tensor::from_fn(n, 1, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        });
        let path = simulate_sde(&ZeroControl { dim: 1 }, &sched, &grid, x0, &mut rng).unwrap();
        let h = grid.dt();
        let mut v = 1.0;
        for _ in 0..16 {
            v = (1.0 + 0.5 * beta * h).powi(2) * v + beta * h;
        }
        let continuous = 2.0 * (beta * 1.0f64).exp() - 1.0;
        assert!((v - continuous).abs() / continuous < 0.1);
        let (mean, var) = moments(path.terminal());
        // Standard error of a normal sample variance: v sqrt(2 / n).
        let se = v * (2.0 / n as f64).sqrt();
        assert!((var - v).abs() < 3.0 * se, "{var} vs {v}");
        assert!(mean.abs() < 3.0 * (v / n as f64).sqrt());
    }

    #[test]
    fn stationary_control_keeps_the_standard_normal() {
        let sched = Schedule::Vp(VpSchedule::default());
        let grid = TimeGrid::new(128, 1.0).unwrap();
        let mut rng = crate::seeded_rng(14, 0);
        let n = 50_000;
        let x0 = Tensor::from_fn(n, 2, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        });
        let control = ScaledIdentityControl {
            dim: 2,
            factor: -1.0,
            schedule: sched,
        };
        let path = simulate_sde(&control, &sched, &grid, x0, &mut rng).unwrap();
        for k in [32, 64, 128] {
            let (mean, var) = moments(&path.states[k]);
            assert!(mean.abs() < 0.02, "node {k}: mean {mean}");
            assert!((var - 1.0).abs() < 0.03, "node {k}: var {var}");
        }
    }
}
