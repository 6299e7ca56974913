mod support;

use proptest::prelude::*;
use support::gradients::{estimator_loss, ndt_pipeline, relu_network, tape_ops, PIPELINE_KINDS};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn tape_ops_match_finite_differences(seed in any::<u64>(), n in 2usize..5, k in 1usize..4) {
        let r = tape_ops(seed, n, k);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn estimator_losses_match_finite_differences(seed in any::<u64>(), kind in 0usize..7, n in 4usize..10) {
        let r = estimator_loss(seed, kind, n);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn ndt_pipeline_matches_finite_differences(seed in any::<u64>(), constraint in 0u8..3, kind in 0..PIPELINE_KINDS, n in 4usize..10) {
        let r = ndt_pipeline(seed, constraint, kind, n);
        prop_assert!(r.is_ok(), "{:?}", r);
    }
}

#[test]
fn relu_network_gradient_away_from_kinks() {
    relu_network(11).unwrap();
}
