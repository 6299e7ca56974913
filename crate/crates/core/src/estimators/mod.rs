//! Variational mutual-information estimators.
//!
//! [`formulas`] holds the closed-form estimator values; the functions in this
//! module evaluate trained critics on sample batches; [`CriticSet`] owns the
//! critics of one estimator and trains them on a gradient tape.

mod critics;
pub mod formulas;

use alloc::vec::Vec;

pub use critics::{CriticSet, Terms};
pub use formulas::{
    chi2_bound_value, chi2_upper_kl, chi2_variational, count_clamped, dine_value, dv_value, infonce_value,
    nwj_value, smile_value, tuba_value, Chi2Form, Measure, EXP_CLAMP,
};

use crate::error::{Error, Result};
use crate::math;
use crate::numerics::{Mlp, RngStream, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorKind {
    Mine,
    Smile,
    Nwj,
    Tuba,
    InfoNce,
    Dine,
    Chi2,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 7] = [
        EstimatorKind::Mine,
        EstimatorKind::Smile,
        EstimatorKind::Nwj,
        EstimatorKind::Tuba,
        EstimatorKind::InfoNce,
        EstimatorKind::Dine,
        EstimatorKind::Chi2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Mine => "mine",
            EstimatorKind::Smile => "smile",
            EstimatorKind::Nwj => "nwj",
            EstimatorKind::Tuba => "tuba",
            EstimatorKind::InfoNce => "infonce",
            EstimatorKind::Dine => "dine",
            EstimatorKind::Chi2 => "chi2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// The entropy-decomposition estimate is neither a lower nor an upper bound.
    pub fn is_lower_bound(self) -> bool {
        self != EstimatorKind::Dine
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    /// SMILE clip level.
    pub tau: f64,
    /// TUBA constant.
    pub alpha: f64,
    /// MINE moving-average rate.
    pub ema_rate: f64,
    pub chi2_form: Chi2Form,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::Mine,
            tau: 0.2,
            alpha: 1.0,
            ema_rate: 0.99,
            chi2_form: Chi2Form::Standard,
        }
    }
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::invalid("tau", "must be > 0"));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid("alpha", "must be finite and > 0"));
        }
        if !(self.ema_rate > 0.0 && self.ema_rate < 1.0) {
            return Err(Error::invalid("ema_rate", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// An estimated mutual information in nats.
#[derive(Clone, Debug, PartialEq)]
pub struct MiEstimate {
    pub value: f64,
    pub n_samples: usize,
    pub kind: EstimatorKind,
    pub is_lower_bound: bool,
    /// Critic outputs altered by the pre-exponential clamp.
    pub clamped: usize,
    /// Set when a degenerate batch forced a unit-scale reference distribution.
    pub reference_fallback: bool,
}

impl MiEstimate {
    fn new(kind: EstimatorKind, value: f64, n_samples: usize, clamped: usize) -> Self {
        Self {
            value,
            n_samples,
            kind,
            is_lower_bound: kind.is_lower_bound(),
            clamped,
            reference_fallback: false,
        }
    }
}

/// Paired samples `(x_i, y_i)` from the joint distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct JointBatch {
    pub x: Tensor,
    pub y: Tensor,
}

impl JointBatch {
    pub fn new(x: Tensor, y: Tensor) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::ShapeMismatch {
                context: "JointBatch",
                expected: alloc::vec![x.rows()],
                found: alloc::vec![y.rows()],
            });
        }
        if x.rows() < 2 {
            return Err(Error::invalid("batch", "need at least two samples"));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn joint(&self) -> Tensor {
        Tensor::hstack(&[&self.x, &self.y]).expect("rows checked")
    }

    /// Product-of-marginals pairs `(x_i, y_{i+1 mod n})`.
    pub fn product(&self) -> Tensor {
        let n = self.len();
        let idx: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
        Tensor::hstack(&[&self.x, &gather(&self.y, &idx)]).expect("rows checked")
    }
}

pub(crate) fn gather(t: &Tensor, idx: &[usize]) -> Tensor {
    let c = t.cols();
    let mut data = Vec::with_capacity(idx.len() * c);
    for &i in idx {
        data.extend_from_slice(t.row(i));
    }
    Tensor::new(idx.len(), c, data).expect("sized by construction")
}

/// I.i.d. Gaussian reference samples matched column-wise to the mean and
/// standard deviation of `t`. Returns whether a unit-scale fallback was used.
pub fn gaussian_reference(t: &Tensor, rng: &mut RngStream) -> (Tensor, bool) {
    let (n, c) = (t.rows(), t.cols());
    let mut stats = Vec::with_capacity(c);
    let mut fallback = false;
    for j in 0..c {
        let col = t.col(j);
        let m = col.iter().sum::<f64>() / n as f64;
        let v = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        let mut s = math::sqrt(v);
        if !(s > 1e-12) || !s.is_finite() {
            s = 1.0;
            fallback = true;
        }
        stats.push((m, s));
    }
    let mut data = Vec::with_capacity(n * c);
    for _ in 0..n {
        for &(m, s) in &stats {
            data.push(m + s * rng.normal());
        }
    }
    (Tensor::new(n, c, data).expect("sized by construction"), fallback)
}

fn eval_pair(batch: &JointBatch, critic: &Mlp) -> Result<(Vec<f64>, Vec<f64>)> {
    let tp = critic.eval(&batch.joint())?.into_data();
    let tq = critic.eval(&batch.product())?.into_data();
    Ok((tp, tq))
}

pub fn dv_mine(batch: &JointBatch, critic: &Mlp) -> Result<MiEstimate> {
    let (tp, tq) = eval_pair(batch, critic)?;
    let v = dv_value(Measure::empirical(&tp)?, Measure::empirical(&tq)?);
    Ok(MiEstimate::new(EstimatorKind::Mine, v, batch.len(), count_clamped(&tq)))
}

pub fn smile(batch: &JointBatch, critic: &Mlp, tau: f64) -> Result<MiEstimate> {
    let (tp, tq) = eval_pair(batch, critic)?;
    let v = smile_value(Measure::empirical(&tp)?, Measure::empirical(&tq)?, tau)?;
    Ok(MiEstimate::new(EstimatorKind::Smile, v, batch.len(), count_clamped(&tq)))
}

pub fn nwj_dv_variant(batch: &JointBatch, critic: &Mlp) -> Result<MiEstimate> {
    let (tp, tq) = eval_pair(batch, critic)?;
    let v = nwj_value(Measure::empirical(&tp)?, Measure::empirical(&tq)?);
    Ok(MiEstimate::new(EstimatorKind::Nwj, v, batch.len(), count_clamped(&tq)))
}

pub fn tuba(batch: &JointBatch, critic: &Mlp, alpha: f64) -> Result<MiEstimate> {
    let (tp, tq) = eval_pair(batch, critic)?;
    let v = tuba_value(Measure::empirical(&tp)?, Measure::empirical(&tq)?, alpha)?;
    Ok(MiEstimate::new(EstimatorKind::Tuba, v, batch.len(), count_clamped(&tq)))
}

/// Contrastive estimate averaged over consecutive blocks of `block` samples
/// (the last partial block is dropped unless it is the only one).
pub fn infonce(batch: &JointBatch, critic: &Mlp, block: usize) -> Result<MiEstimate> {
    let n = batch.len();
    let k = block.clamp(2, n);
    let blocks = (n / k).max(1);
    let (mut acc, mut clamped) = (0.0, 0);
    for b in 0..blocks {
        let rows: Vec<usize> = (b * k..(b + 1) * k).collect();
        let x = gather(&batch.x, &rows);
        let y = gather(&batch.y, &rows);
        let mut xi = Vec::with_capacity(k * k);
        let mut yi = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                xi.push(j);
                yi.push(i);
            }
        }
        let input = Tensor::hstack(&[&gather(&x, &xi), &gather(&y, &yi)])?;
        let s = critic.eval(&input)?;
        clamped += count_clamped(s.data());
        acc += infonce_value(&Tensor::new(k, k, s.into_data())?)?;
    }
    Ok(MiEstimate::new(EstimatorKind::InfoNce, acc / blocks as f64, blocks * k, clamped))
}

/// `D(P_XY ‖ P_X Q_Y') − D(P_Y ‖ Q_Y')` with a moment-matched Gaussian `Y'`
/// shared by both terms.
pub fn dine_memoryless(batch: &JointBatch, joint: &Mlp, marginal: &Mlp, rng: &mut RngStream) -> Result<MiEstimate> {
    let (yr, fallback) = gaussian_reference(&batch.y, rng);
    let tp = joint.eval(&batch.joint())?.into_data();
    let tq = joint.eval(&Tensor::hstack(&[&batch.x, &yr])?)?.into_data();
    let mp = marginal.eval(&batch.y)?.into_data();
    let mq = marginal.eval(&yr)?.into_data();
    let v = dine_value(
        Measure::empirical(&tp)?,
        Measure::empirical(&tq)?,
        Measure::empirical(&mp)?,
        Measure::empirical(&mq)?,
    );
    let mut e = MiEstimate::new(EstimatorKind::Dine, v, batch.len(), count_clamped(&tq) + count_clamped(&mq));
    e.reference_fallback = fallback;
    Ok(e)
}

/// Forward and reverse χ² between samples `p` and `q` from a two-headed critic.
fn chi2_pair(critic: &Mlp, p: &Tensor, q: &Tensor, form: Chi2Form) -> Result<(f64, f64)> {
    let hp = critic.eval(p)?;
    let hq = critic.eval(q)?;
    let (p0, p1, q0, q1) = (hp.col(0), hp.col(1), hq.col(0), hq.col(1));
    let fwd = chi2_variational(Measure::empirical(&p0)?, Measure::empirical(&q0)?, form)?;
    let rev = chi2_variational(Measure::empirical(&q1)?, Measure::empirical(&p1)?, form)?;
    Ok((fwd, rev))
}

/// DV estimate of `D(P_XY ‖ Q_X' Q_Y')` minus the χ² upper bounds on
/// `D(P_X ‖ Q_X')` and `D(P_Y ‖ Q_Y')`, with Gaussian references.
pub fn chi2_bound_mi(
    batch: &JointBatch,
    joint: &Mlp,
    chi_x: &Mlp,
    chi_y: &Mlp,
    form: Chi2Form,
    rng: &mut RngStream,
) -> Result<MiEstimate> {
    let (xr, fx) = gaussian_reference(&batch.x, rng);
    let (yr, fy) = gaussian_reference(&batch.y, rng);
    let tp = joint.eval(&batch.joint())?.into_data();
    let tq = joint.eval(&Tensor::hstack(&[&xr, &yr])?)?.into_data();
    let dv = dv_value(Measure::empirical(&tp)?, Measure::empirical(&tq)?);
    let cx = chi2_pair(chi_x, &batch.x, &xr, form)?;
    let cy = chi2_pair(chi_y, &batch.y, &yr, form)?;
    let v = chi2_bound_value(dv, cx, cy)?;
    let mut e = MiEstimate::new(EstimatorKind::Chi2, v, batch.len(), count_clamped(&tq));
    e.reference_fallback = fx || fy;
    Ok(e)
}
