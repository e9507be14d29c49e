//! Randomised invariants of the embeddings, the step-size ladder, the
//! consistency parameterisation and the exploration schedule.

use cds_core::dynamics::{sample_d_t, sample_prior, Schedule, TimeGrid, VpSchedule};
use cds_core::nets::{ConsistencyHead, ControlNet, FourierEmbedding, NetConfig, TimeArg};
use cds_core::seeded_rng;
use cds_core::trainers::TrainConfig;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fourier_features_have_constant_norm(features in 1usize..32, seed in any::<u64>(), s in -10.0f64..10.0) {
        let emb = FourierEmbedding::new(features, 16.0, &mut seeded_rng(seed, 0));
        let v = emb.embed(s);
        prop_assert_eq!(v.len(), 2 * features);
        let norm2: f64 = v.iter().map(|x| x * x).sum();
        prop_assert!((norm2 - features as f64).abs() < 1e-9);
    }

    #[test]
    fn ladder_draws_tile_the_remaining_horizon(log_n in 1u32..9, horizon in 0.1f64..4.0, seed in any::<u64>()) {
        let grid = TimeGrid::new(1 << log_n, horizon).unwrap();
        let mut rng = seeded_rng(seed, 2);
        for _ in 0..32 {
            let draw = sample_d_t(&grid, &mut rng).unwrap();
            prop_assert!(draw.exponent < log_n);
            prop_assert_eq!(draw.d, (1u64 << draw.exponent) as f64 * grid.dt());
            prop_assert_eq!(draw.t, grid.node(draw.node));
            let stride = 1usize << (draw.exponent + 1);
            prop_assert_eq!(draw.node % stride, 0);
            prop_assert!(draw.node + stride <= grid.steps());
        }
    }

    #[test]
    fn consistency_head_is_identity_at_the_horizon(seed in any::<u64>(), rows in 1usize..16, scale in 0.05f64..2.0) {
        let sched = Schedule::Vp(VpSchedule::default());
        let trunk = ControlNet::new(NetConfig::with_reference(2, sched), &mut seeded_rng(seed, 0)).unwrap();
        let head = ConsistencyHead::new(trunk, scale, 1.0 / 128.0).unwrap();
        let x = sample_prior(rows, 2, &mut seeded_rng(seed, 1));
        let y = head.forward(&x, TimeArg::Shared(head.horizon())).unwrap();
        prop_assert_eq!(y.data(), x.data());
    }

    #[test]
    fn exploration_decays_monotonically_to_one(explore in 1.0f64..5.0, decay in 0.0f64..1.0, iterations in 1usize..500) {
        let cfg = TrainConfig { iterations, explore, explore_decay: decay, ..TrainConfig::default() };
        let mut prev = f64::INFINITY;
        for iter in 1..=iterations {
            let c = cfg.explore_at(iter);
            prop_assert!((1.0..=explore).contains(&c));
            prop_assert!(c <= prev);
            prev = c;
        }
        prop_assert_eq!(cfg.explore_at(1), explore);
        if decay > 0.0 && (iterations - 1) as f64 >= decay * iterations as f64 {
            prop_assert_eq!(cfg.explore_at(iterations), 1.0);
        }
    }
}
