use capbench_core::bounds::{
    awgn_capacity, awgn_mac_region, blahut_arimoto, oi_reference_bounds, ppc_lower_m, ppc_reference_bounds, ppc_upper,
    BoundKind, ChannelMatrix, RateRegion,
};
use capbench_core::reference::{OI_BOUNDS, PPC_BOUNDS};
use proptest::prelude::*;

fn stochastic_rows(rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.01f64..1.0, cols), rows).prop_map(|rows| {
        rows.into_iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.into_iter().map(|v| v / s).collect()
            })
            .collect()
    })
}

fn mutual_information(w: &ChannelMatrix, p: &[f64]) -> f64 {
    let q: Vec<f64> = (0..w.cols()).map(|y| (0..w.rows()).map(|x| p[x] * w.row(x)[y]).sum()).collect();
    let mut i = 0.0;
    for x in 0..w.rows() {
        for y in 0..w.cols() {
            let v = w.row(x)[y];
            if p[x] > 0.0 && v > 0.0 {
                i += p[x] * v * (v / q[y]).ln();
            }
        }
    }
    i
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn blahut_arimoto_objective_is_monotone(rows in stochastic_rows(4, 5)) {
        let w = ChannelMatrix::from_rows(&rows).unwrap();
        let r = blahut_arimoto(&w, None, 1e-9, 5000).unwrap();
        prop_assert!(r.is_monotone());
        prop_assert!(r.capacity >= -1e-12);
        prop_assert!(r.capacity <= (4f64).ln() + 1e-9);
        let s: f64 = r.input.iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-9);
        // The returned value is the mutual information of the returned input
        // and no other input does noticeably better.
        prop_assert!((mutual_information(&w, &r.input) - r.capacity).abs() < 1e-6);
        let uniform = [0.25; 4];
        prop_assert!(mutual_information(&w, &uniform) <= r.capacity + 1e-6);
    }

    #[test]
    fn symmetric_channels_get_uniform_inputs(base in prop::collection::vec(0.01f64..1.0, 4)) {
        let s: f64 = base.iter().sum();
        let base: Vec<f64> = base.iter().map(|v| v / s).collect();
        let rows: Vec<Vec<f64>> = (0..4).map(|k| (0..4).map(|j| base[(j + k) % 4]).collect()).collect();
        let w = ChannelMatrix::from_rows(&rows).unwrap();
        let r = blahut_arimoto(&w, None, 1e-12, 20000).unwrap();
        for &p in &r.input {
            prop_assert!((p - 0.25).abs() < 1e-4, "{:?}", r.input);
        }
        let entropy: f64 = -base.iter().map(|v| v * v.ln()).sum::<f64>();
        prop_assert!((r.capacity - ((4f64).ln() - entropy)).abs() < 1e-8);
    }

    #[test]
    fn peak_lower_bounds_stay_below_upper(db in -5.0f64..25.0, m in 2usize..8) {
        let p = 10f64.powf(db / 10.0);
        let lower = ppc_lower_m(p, m).unwrap();
        let upper = ppc_upper(p).unwrap();
        prop_assert!(lower >= -1e-9);
        prop_assert!(lower <= upper.value + 1e-9, "{} > {}", lower, upper.value);
        prop_assert!(upper.value <= awgn_capacity(p).unwrap().value + 1e-12);
    }

    #[test]
    fn pentagon_is_a_valid_region(c1 in 0.0f64..3.0, c2 in 0.0f64..3.0, frac in 0.0f64..1.0) {
        let sum = c1.max(c2) + frac * c1.min(c2);
        let region = RateRegion::pentagon(c1, c2, sum);
        prop_assert!(region.vertices.iter().all(|&(a, b)| a >= 0.0 && b >= 0.0));
        prop_assert!((region.r1_max() - c1).abs() < 1e-12);
        prop_assert!((region.r2_max() - c2).abs() < 1e-12);
        prop_assert!(region.sum_rate() <= sum + 1e-12);
        for &(a, b) in &region.vertices {
            prop_assert!(region.contains(a, b, 1e-12));
        }
        prop_assert!(!region.contains(c1 + 0.01, 0.0, 1e-12));
        let mirrored = region.mirrored().mirrored();
        prop_assert_eq!(mirrored.vertices, region.vertices);
    }

    #[test]
    fn awgn_mac_sum_rate_dominates_users(p1 in 0.0f64..200.0, p2 in 0.0f64..200.0) {
        let region = awgn_mac_region(p1, p2).unwrap();
        prop_assert!(region.sum_rate() + 1e-12 >= region.r1_max().max(region.r2_max()));
        prop_assert!(region.sum_rate() <= region.r1_max() + region.r2_max() + 1e-12);
    }
}

#[test]
fn reference_tables_are_consistent() {
    for &(db, lo, hi) in &OI_BOUNDS {
        let (l, u) = oi_reference_bounds(db).unwrap();
        assert_eq!((l.value, u.value), (lo, hi));
        assert_eq!((l.kind, u.kind), (BoundKind::ReferenceTable, BoundKind::ReferenceTable));
        assert!(l.value <= u.value);
    }
    for &(db, lo, hi) in &PPC_BOUNDS {
        let (l, u) = ppc_reference_bounds(db).unwrap();
        assert_eq!((l.value, u.value), (lo, hi));
        assert!(u.value <= awgn_capacity(10f64.powf(db / 10.0)).unwrap().value + 1e-3);
    }
    assert!(oi_reference_bounds(4.0).is_err());
}
