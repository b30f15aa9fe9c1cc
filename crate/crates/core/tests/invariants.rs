mod common;

use common::*;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

fn config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(20_240_611),
        failure_persistence: None,
        ..Config::default()
    }
}

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn bps_without_refresh_keeps_speed(
        dim in 1usize..8,
        scale in log_uniform(0.1, 10.0),
        seed in any::<u64>(),
    ) {
        speed_conservation(dim, scale, 2000, seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn leapfrog_round_trip((x, v) in phase_strategy(), t in 0.01f64..2.0) {
        leapfrog_reversibility(x, v, t).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn refresh_keeps_standard_normal(alpha in 0.0f64..0.999, seed in any::<u64>()) {
        ar_refresh_stationarity(alpha, seed).map_err(TestCaseError::fail)?;
    }
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn exact_flow_keeps_energy(
        (x, v) in phase_strategy(),
        scale in log_uniform(0.01, 100.0),
        t in -50.0f64..50.0,
    ) {
        exact_flow_energy(x, v, scale, t).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn adjoint_metric_within_equivalence_constant(
        a in log_uniform(0.01, 100.0),
        c in log_uniform(0.01, 100.0),
        shrink in 0.0f64..0.99,
        negative in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let sign = if negative { -1.0 } else { 1.0 };
        metric_equivalence(a, c, shrink, sign, 200, seed).map_err(TestCaseError::fail)?;
    }
}
