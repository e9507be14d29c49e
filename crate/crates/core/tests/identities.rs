//! Invariances under density rescaling, reduction identities between the
//! samplers, and the evaluation-count contract of joint training.

use cds_core::dynamics::{sample_prior, simulate_sde, Schedule, TimeGrid, VpSchedule};
use cds_core::eval::estimate_log_z;
use cds_core::losses::{kl_objective, lv_loss, rn_terms};
use cds_core::nets::{ConsistencyHead, ControlNet, NetConfig, TimeArg};
use cds_core::sampling::{sample_multi_step, sample_single_step};
use cds_core::targets::{GmmTarget, Scaled};
use cds_core::trainers::{
    train_dis, train_scds, NoClock, SamplerTrainer, StepOutcome, TrainConfig,
};
use cds_core::{math::ln, seeded_rng};

fn sched() -> Schedule {
    Schedule::Vp(VpSchedule::default())
}

fn net(seed: u64) -> ControlNet {
    let mut net = ControlNet::new(
        NetConfig::with_reference(2, sched()),
        &mut seeded_rng(seed, 0),
    )
    .unwrap();
    let ids: Vec<_> = net.params().ids().collect();
    let mut rng = seeded_rng(seed, 1);
    for id in ids {
        let t = net.params_mut().get_mut(id);
        let noise = sample_prior(t.rows(), t.cols(), &mut rng);
        for (p, z) in t.data_mut().iter_mut().zip(noise.data()) {
            *p += 0.1 * z;
        }
    }
    net
}

#[test]
fn rescaling_the_density() {
    let net = net(1);
    let grid = TimeGrid::new(16, 1.0).unwrap();
    let mut rng = seeded_rng(2, 0);
    let x0 = sample_prior(64, 2, &mut rng);
    let path = simulate_sde(&net, &sched(), &grid, x0, &mut rng).unwrap();
    let base = GmmTarget::grid9();
    let t0 = rn_terms(&path, &net, &sched(), &base).unwrap();
    let log_z0 = estimate_log_z(&net, &sched(), &grid, &base, 200, &mut seeded_rng(3, 0)).unwrap();
    for c in [0.1f64, 10.0] {
        let scaled = Scaled {
            inner: GmmTarget::grid9(),
            log_c: ln(c),
        };
        let t = rn_terms(&path, &net, &sched(), &scaled).unwrap();
        let lv = (lv_loss(&t).unwrap().value, lv_loss(&t0).unwrap().value);
        assert!((lv.0 - lv.1).abs() <= 1e-10 * lv.1.max(1.0), "lv {lv:?}");
        let kl = kl_objective(&t).unwrap().value - kl_objective(&t0).unwrap().value;
        assert!((kl + ln(c)).abs() <= 1e-10, "kl shift {kl}");
        let log_z =
            estimate_log_z(&net, &sched(), &grid, &scaled, 200, &mut seeded_rng(3, 0)).unwrap();
        assert!((log_z.value - log_z0.value - ln(c)).abs() <= 1e-10);
    }
}

#[test]
fn one_step_multi_step_equals_single_step() {
    let net = net(4);
    let a = sample_single_step(&net, &sched(), 100, &mut seeded_rng(5, 0)).unwrap();
    let b = sample_multi_step(&net, &sched(), 1, 100, &mut seeded_rng(5, 0)).unwrap();
    assert_eq!(a.data(), b.data());
}

#[test]
fn consistency_boundary_is_exact() {
    for seed in 0..5 {
        let head = ConsistencyHead::new(net(seed), 1.0, 1.0 / 128.0).unwrap();
        let x = sample_prior(16, 2, &mut seeded_rng(seed, 9));
        let y = head.forward(&x, TimeArg::Shared(1.0)).unwrap();
        assert_eq!(x.data(), y.data());
    }
}

fn small(lambda_sc: f64) -> TrainConfig {
    TrainConfig {
        iterations: 4,
        batch: 32,
        steps: 16,
        lambda_sc,
        seed: 21,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_consistency_weight_is_the_base_sampler() {
    let target = GmmTarget::grid9();
    let dis = train_dis(&target, sched(), &small(1.0), &NoClock).unwrap();
    let scds = train_scds(&target, sched(), &small(0.0), &NoClock).unwrap();
    assert_eq!(dis.records, scds.records);
    assert_eq!(dis.model.params(), scds.model.params());
}

#[test]
fn joint_training_costs_three_extra_evaluations_per_iteration() {
    let target = GmmTarget::grid9();
    let mut dis = SamplerTrainer::new(&target, sched(), small(0.0)).unwrap();
    let mut scds = SamplerTrainer::new(&target, sched(), small(1.0)).unwrap();
    let (mut prev_dis, mut prev_scds) = (0, 0);
    for _ in 0..4 {
        let (StepOutcome::Updated(a), StepOutcome::Updated(b)) =
            (dis.step(&NoClock).unwrap(), scds.step(&NoClock).unwrap())
        else {
            panic!("numeric failure");
        };
        assert_eq!(a.nfe_cum - prev_dis, 16);
        assert_eq!(b.nfe_cum - prev_scds, 19);
        (prev_dis, prev_scds) = (a.nfe_cum, b.nfe_cum);
    }
}
