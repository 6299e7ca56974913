//! Oracle critics on the symmetric four-outcome joint pmf
//! `p = [[0.45, 0.05], [0.05, 0.45]]` with uniform marginals.

use capbench_core::estimators::{chi2_variational, dine_value, dv_value, nwj_value, Chi2Form, Measure};

pub const TOY: [[f64; 2]; 2] = [[0.45, 0.05], [0.05, 0.45]];

/// `I(X; Y)` by enumeration.
pub fn toy_mi() -> f64 {
    let mut i = 0.0;
    for row in TOY {
        for p in row {
            i += p * (p / 0.25).ln();
        }
    }
    i
}

fn joint_and_product(t: impl Fn(usize, usize) -> f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut tv = Vec::new();
    let mut pw = Vec::new();
    for (x, row) in TOY.iter().enumerate() {
        for (y, &p) in row.iter().enumerate() {
            tv.push(t(x, y));
            pw.push(p);
        }
    }
    (tv, pw, vec![0.25; 4])
}

/// `(name, recovered value, exact value)` for DV, NWJ, DINE and the
/// standard-form χ² representation with their optimal critics and exact
/// expectations.
pub fn oracle_values() -> Vec<(&'static str, f64, f64)> {
    let star = |x: usize, y: usize| (TOY[x][y] / 0.25).ln();
    let (t, pw, qw) = joint_and_product(star);
    let p = Measure::weighted(&t, &pw).unwrap();
    let q = Measure::weighted(&t, &qw).unwrap();
    let dv = dv_value(p, q);
    let nwj = nwj_value(p, q);

    // Reference on y: r = (0.3, 0.7). Joint critic ln p(y|x)/r(y), marginal ln p(y)/r(y).
    let r = [0.3, 0.7];
    let mut jt = Vec::new();
    let mut jp = Vec::new();
    let mut jq = Vec::new();
    for row in TOY {
        for (y, &p) in row.iter().enumerate() {
            jt.push((p / 0.5 / r[y]).ln());
            jp.push(p);
            jq.push(0.5 * r[y]);
        }
    }
    let mt: Vec<f64> = r.iter().map(|ry| (0.5 / ry).ln()).collect();
    let dine = dine_value(
        Measure::weighted(&jt, &jp).unwrap(),
        Measure::weighted(&jt, &jq).unwrap(),
        Measure::weighted(&mt, &[0.5, 0.5]).unwrap(),
        Measure::weighted(&mt, &r).unwrap(),
    );

    // χ²(P‖Q) for P = (1/2, 1/2), Q = (1/4, 3/4) is 1/3; the optimal
    // standard-form critic is dP/dQ.
    let (pp, qq) = ([0.5, 0.5], [0.25, 0.75]);
    let ratio = [pp[0] / qq[0], pp[1] / qq[1]];
    let chi = chi2_variational(
        Measure::weighted(&ratio, &pp).unwrap(),
        Measure::weighted(&ratio, &qq).unwrap(),
        Chi2Form::Standard,
    )
    .unwrap();

    let mi = toy_mi();
    vec![("dv", dv, mi), ("nwj", nwj, mi), ("dine", dine, mi), ("chi2_standard", chi, 1.0 / 3.0)]
}
