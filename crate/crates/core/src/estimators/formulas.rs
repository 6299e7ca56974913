//! Closed-form estimator values on (optionally weighted) critic outputs.
//!
//! With empirical measures these are the sample estimates; with weights equal
//! to a probability mass function they are the exact expectations.

use crate::error::{Error, Result};
use crate::math;
use crate::numerics::Tensor;

/// Critic outputs are clamped to `±EXP_CLAMP` before exponentiation.
pub const EXP_CLAMP: f64 = 50.0;

#[inline]
pub(crate) fn clamped_exp(t: f64) -> f64 {
    math::exp(t.clamp(-EXP_CLAMP, EXP_CLAMP))
}

/// Number of values that the pre-exponential clamp alters.
pub fn count_clamped(values: &[f64]) -> usize {
    values.iter().filter(|t| t.abs() > EXP_CLAMP).count()
}

/// Critic values under one distribution, uniformly weighted or carrying an
/// explicit probability vector.
#[derive(Clone, Copy, Debug)]
pub struct Measure<'a> {
    values: &'a [f64],
    weights: Option<&'a [f64]>,
}

impl<'a> Measure<'a> {
    pub fn empirical(values: &'a [f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("measure"));
        }
        Ok(Self { values, weights: None })
    }

    /// `weights` must be nonnegative and sum to one.
    pub fn weighted(values: &'a [f64], weights: &'a [f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("measure"));
        }
        if values.len() != weights.len() {
            return Err(Error::ShapeMismatch {
                context: "Measure::weighted",
                expected: alloc::vec![values.len()],
                found: alloc::vec![weights.len()],
            });
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("weights", "must be a probability vector"));
        }
        Ok(Self {
            values,
            weights: Some(weights),
        })
    }

    pub fn values(&self) -> &'a [f64] {
        self.values
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        match self.weights {
            None => self.values.iter().map(|&v| f(v)).sum::<f64>() / self.values.len() as f64,
            Some(w) => self.values.iter().zip(w).map(|(&v, &p)| p * f(v)).sum(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.expect(|v| v)
    }
}

/// Donsker-Varadhan: `E_P[T] − ln E_Q[e^T]`.
pub fn dv_value(p: Measure, q: Measure) -> f64 {
    p.mean() - math::ln(q.expect(clamped_exp))
}

/// DV with `e^T` clipped to `[e^−τ, e^τ]` inside the Q expectation.
pub fn smile_value(p: Measure, q: Measure, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::invalid("tau", "must be > 0"));
    }
    let (lo, hi) = (math::exp(-tau), math::exp(tau));
    Ok(p.mean() - math::ln(q.expect(|t| clamped_exp(t).clamp(lo, hi))))
}

/// Legendre-Fenchel variant: `E_P[T] − E_Q[e^T − 1]`.
pub fn nwj_value(p: Measure, q: Measure) -> f64 {
    p.mean() - (q.expect(clamped_exp) - 1.0)
}

/// `E_P[T] − (E_Q[e^T]/α + ln α − 1)`.
pub fn tuba_value(p: Measure, q: Measure, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::invalid("alpha", "must be finite and > 0"));
    }
    Ok(p.mean() - (q.expect(clamped_exp) / alpha + math::ln(alpha) - 1.0))
}

/// Contrastive bound from a `[K, K]` score matrix with `scores[i][j] = T(x_j, y_i)`.
///
/// Evaluated as `ln K − mean_i ln Σ_j e^{T_ij − T_ii}`; each inner sum contains
/// the term `e^0 = 1`, so the result never exceeds `ln K`.
pub fn infonce_value(scores: &Tensor) -> Result<f64> {
    let k = scores.rows();
    if k < 2 || scores.cols() != k {
        return Err(Error::invalid("scores", "need a square score matrix with K >= 2"));
    }
    let mut acc = 0.0;
    for i in 0..k {
        let row = scores.row(i);
        let d = row[i].clamp(-EXP_CLAMP, EXP_CLAMP);
        let s: f64 = row.iter().map(|&t| math::exp(t.clamp(-EXP_CLAMP, EXP_CLAMP) - d)).sum();
        acc += math::ln(s);
    }
    Ok(math::ln(k as f64) - acc / k as f64)
}

/// Which variational expression is used for the χ² divergence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Chi2Form {
    /// `E_P[T] − ln E_Q[T²] − 1`
    Paper,
    /// `2 E_P[T] − E_Q[T²] − 1`
    Standard,
}

impl Chi2Form {
    pub fn name(self) -> &'static str {
        match self {
            Chi2Form::Paper => "paper",
            Chi2Form::Standard => "standard",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "paper" => Some(Chi2Form::Paper),
            "standard" => Some(Chi2Form::Standard),
            _ => None,
        }
    }
}

/// Variational χ²(P‖Q) for critic values on P and Q samples.
pub fn chi2_variational(p: Measure, q: Measure, form: Chi2Form) -> Result<f64> {
    let a = p.mean();
    let b = q.expect(|t| t * t);
    match form {
        Chi2Form::Standard => Ok(2.0 * a - b - 1.0),
        Chi2Form::Paper => {
            if !(b > 0.0) {
                return Err(Error::invalid("critic", "E_Q[T^2] must be > 0 for the logarithmic form"));
            }
            Ok(a - math::ln(b) - 1.0)
        }
    }
}

/// KL upper bound from the forward and reverse χ² divergences, in nats.
pub fn chi2_upper_kl(chi_pq: f64, chi_qp: f64) -> Result<f64> {
    if !(chi_pq >= 0.0) || !(chi_qp >= 0.0) {
        return Err(Error::invalid("chi", "chi-square divergences must be >= 0"));
    }
    if chi_pq == 0.0 {
        return Ok(0.0);
    }
    let denominator = (1.0 + chi_qp) * (1.0 + chi_pq) * (1.0 + chi_pq) - 1.0;
    if !(denominator > 0.0) {
        return Err(Error::DegenerateChiSquare {
            chi_pq,
            chi_qp,
            denominator,
        });
    }
    Ok(math::ln1p(chi_pq) - 1.5 * chi_pq * chi_pq / denominator)
}

/// Entropy-decomposition estimate with a shared reference:
/// `D(P_XY ‖ P_X Q_Y') − D(P_Y ‖ Q_Y')`, both by DV.
pub fn dine_value(joint_p: Measure, joint_q: Measure, marg_p: Measure, marg_q: Measure) -> f64 {
    dv_value(joint_p, joint_q) - dv_value(marg_p, marg_q)
}

/// `DV − χ²_UP(X‖X') − χ²_UP(Y‖Y')` with each divergence pair `(forward, reverse)`.
/// Negative χ² estimates are treated as zero.
pub fn chi2_bound_value(dv: f64, chi_x: (f64, f64), chi_y: (f64, f64)) -> Result<f64> {
    let up = |(a, b): (f64, f64)| chi2_upper_kl(a.max(0.0), b.max(0.0));
    Ok(dv - up(chi_x)? - up(chi_y)?)
}
