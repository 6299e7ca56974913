mod support;

use proptest::prelude::*;
use support::ordering::{formula_values, infonce_scores, network};

fn critic_values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-8.0f64..8.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn formulas_are_ordered(tp in critic_values(16), tq in critic_values(16), alpha in 1e-3f64..1e3) {
        let r = formula_values(&tp, &tq, alpha);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn infonce_never_exceeds_log_k(k in 2usize..10, s in critic_values(81)) {
        let r = infonce_scores(k, &s);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn network_estimators_are_ordered(seed in any::<u64>(), n in 4usize..40, dx in 1usize..3, scale in 0.1f64..4.0) {
        let r = network(seed, n, dx, scale);
        prop_assert!(r.is_ok(), "{:?}", r);
    }
}
