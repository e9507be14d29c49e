//! First-order convergence of few-step probability-flow integration.

use cds_core::diffcore::Tensor;
use cds_core::dynamics::{ScaledIdentityControl, Schedule, VpSchedule};
use cds_core::math::exp;
use cds_core::sampling::sample_multi_step;
use cds_core::seeded_rng;

#[test]
fn endpoint_error_halves_per_grid_doubling() {
    let sched = Schedule::Vp(VpSchedule::default());
    // u = c g x turns the flow into the linear ODE dx/dt = (1 + c) beta(t) x / 2.
    let c = -0.4;
    let control = ScaledIdentityControl {
        dim: 2,
        factor: c,
        schedule: sched,
    };
    let growth = exp(0.5 * (1.0 + c) * sched.g2_integral(0.0, 1.0));
    let error = |k: usize| {
        let x: Tensor = sample_multi_step(&control, &sched, k, 8, &mut seeded_rng(1, 0)).unwrap();
        let x0 = cds_core::dynamics::sample_prior(8, 2, &mut seeded_rng(1, 0));
        x.data()
            .iter()
            .zip(x0.data())
            .map(|(a, b)| (a - growth * b).abs())
            .fold(0.0, f64::max)
    };
    let errs: Vec<f64> = [16, 32, 64, 128].into_iter().map(error).collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.7..=2.3).contains(&ratio), "ratios for {errs:?}");
    }
}
