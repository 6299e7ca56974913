//! Channel laws, input constraint sets and their forward simulators.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::numerics::{Activation, RngStream, Tape, Tensor, Var};

/// Input constraints of one transmitter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstraintSpec {
    avg_power: Option<f64>,
    peak: Option<f64>,
    nonneg: bool,
    mean_budget: Option<f64>,
}

impl ConstraintSpec {
    pub fn new(avg_power: Option<f64>, peak: Option<f64>, nonneg: bool, mean_budget: Option<f64>) -> Result<Self> {
        if avg_power.is_none() && peak.is_none() && mean_budget.is_none() && !nonneg {
            return Err(Error::InfeasibleConstraint("no constraint given".into()));
        }
        if let Some(p) = avg_power {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::InfeasibleConstraint(format!("average power {p} must be finite and >= 0")));
            }
        }
        if let Some(a) = peak {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::InfeasibleConstraint(format!("peak {a} must be finite and > 0")));
            }
        }
        if let Some(e) = mean_budget {
            if !(e >= 0.0) || !e.is_finite() {
                return Err(Error::InfeasibleConstraint(format!("mean budget {e} must be finite and >= 0")));
            }
            if !nonneg {
                return Err(Error::InfeasibleConstraint(
                    "a mean budget requires nonnegative inputs".into(),
                ));
            }
        }
        let spec = Self {
            avg_power,
            peak,
            nonneg,
            mean_budget,
        };
        if let Some(alpha) = spec.alpha() {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(Error::InfeasibleConstraint(format!(
                    "mean budget / peak = {alpha} must lie in (0, 1]"
                )));
            }
        }
        Ok(spec)
    }

    pub fn average_power(p: f64) -> Result<Self> {
        Self::new(Some(p), None, false, None)
    }

    pub fn avg_power(&self) -> Option<f64> {
        self.avg_power
    }

    pub fn peak(&self) -> Option<f64> {
        self.peak
    }

    pub fn nonneg(&self) -> bool {
        self.nonneg
    }

    pub fn mean_budget(&self) -> Option<f64> {
        self.mean_budget
    }

    /// Ratio of mean budget to peak when both are present.
    pub fn alpha(&self) -> Option<f64> {
        match (self.mean_budget, self.peak) {
            (Some(e), Some(a)) => Some(e / a),
            _ => None,
        }
    }

    /// Squashing nonlinearity whose range matches the support, before scaling
    /// by [`output_scale`](Self::output_scale).
    pub fn output_activation(&self) -> Activation {
        match (self.peak.is_some(), self.nonneg) {
            (true, true) => Activation::Sigmoid,
            (true, false) => Activation::Tanh,
            (false, true) => Activation::Softplus,
            (false, false) => Activation::Identity,
        }
    }

    /// Amplitude of the raw network output: the peak when there is one,
    /// otherwise `√P` or the mean budget, so that an untrained transformer
    /// already spends a budget-sized signal.
    pub fn output_scale(&self) -> f64 {
        match (self.peak, self.avg_power, self.mean_budget) {
            (Some(a), _, _) => a,
            (None, Some(p), _) => math::sqrt(p),
            (None, None, Some(e)) => e,
            _ => 1.0,
        }
    }

    fn range(&self) -> (f64, f64) {
        let lo = if self.nonneg {
            0.0
        } else {
            self.peak.map_or(f64::NEG_INFINITY, |a| -a)
        };
        (lo, self.peak.unwrap_or(f64::INFINITY))
    }

    /// Whether every sample satisfies the constraints, allowing a relative
    /// slack `rel_tol` on the equality side.
    pub fn is_satisfied(&self, x: &[f64], rel_tol: f64) -> bool {
        if x.is_empty() {
            return true;
        }
        let (lo, hi) = self.range();
        if x.iter().any(|&v| !(v >= lo && v <= hi)) {
            return false;
        }
        let n = x.len() as f64;
        if let Some(e) = self.mean_budget {
            let m = x.iter().sum::<f64>() / n;
            if m > e * (1.0 + rel_tol) + f64::MIN_POSITIVE {
                return false;
            }
        }
        if let Some(p) = self.avg_power {
            let ms = x.iter().map(|v| v * v).sum::<f64>() / n;
            if ms > p * (1.0 + rel_tol) + f64::MIN_POSITIVE {
                return false;
            }
        }
        true
    }
}

/// Smallest denominator used when rescaling a batch.
const RESCALE_FLOOR: f64 = 1e-12;

/// Makes a batch feasible: clip to the support, then shrink by
/// `min(1, Ecal / mean)` and by `min(1, sqrt(P / mean square))`.
pub fn project_constraints(raw: &Tensor, c: &ConstraintSpec) -> Result<Tensor> {
    let (lo, hi) = c.range();
    let mut out = raw.map(|v| v.clamp(lo, hi));
    if out.is_empty() {
        return Ok(out);
    }
    let n = out.len() as f64;
    if let Some(e) = c.mean_budget {
        let m = out.data().iter().sum::<f64>() / n;
        let s = (e / m.max(RESCALE_FLOOR)).min(1.0);
        out.data_mut().iter_mut().for_each(|v| *v *= s);
    }
    if let Some(p) = c.avg_power {
        let ms = out.data().iter().map(|v| v * v).sum::<f64>() / n;
        let s = (math::sqrt(p) / math::sqrt(ms).max(RESCALE_FLOOR)).min(1.0);
        out.data_mut().iter_mut().for_each(|v| *v *= s);
    }
    Ok(out)
}

/// The differentiable counterpart of [`project_constraints`].
pub fn project_on_tape(tape: &mut Tape, x: Var, c: &ConstraintSpec) -> Var {
    let (lo, hi) = c.range();
    let mut out = if lo.is_finite() || hi.is_finite() {
        tape.clamp(x, lo, hi)
    } else {
        x
    };
    if let Some(e) = c.mean_budget {
        let m = tape.mean(out);
        let m = tape.clamp(m, RESCALE_FLOOR, f64::INFINITY);
        let r = tape.recip(m);
        let r = tape.scale(r, e);
        let s = tape.clamp(r, f64::NEG_INFINITY, 1.0);
        out = tape.mul_scalar(out, s).expect("scalar by construction");
    }
    if let Some(p) = c.avg_power {
        let sq = tape.square(out);
        let ms = tape.mean(sq);
        let rms = tape.sqrt(ms);
        let rms = tape.clamp(rms, RESCALE_FLOOR, f64::INFINITY);
        let r = tape.recip(rms);
        let r = tape.scale(r, math::sqrt(p));
        let s = tape.clamp(r, f64::NEG_INFINITY, 1.0);
        out = tape.mul_scalar(out, s).expect("scalar by construction");
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelKind {
    Awgn,
    Oi,
    PpcAwgn,
    Poisson,
    AwgnMac,
    OiMac,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Oi => "oi",
            ChannelKind::PpcAwgn => "ppc",
            ChannelKind::Poisson => "poisson",
            ChannelKind::AwgnMac => "awgn_mac",
            ChannelKind::OiMac => "oi_mac",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "awgn" => ChannelKind::Awgn,
            "oi" => ChannelKind::Oi,
            "ppc" | "ppc_awgn" => ChannelKind::PpcAwgn,
            "poisson" => ChannelKind::Poisson,
            "awgn_mac" => ChannelKind::AwgnMac,
            "oi_mac" => ChannelKind::OiMac,
            _ => return None,
        })
    }

    pub fn is_mac(self) -> bool {
        matches!(self, ChannelKind::AwgnMac | ChannelKind::OiMac)
    }

    /// Whether the output can be written as a differentiable function of the
    /// input and independent noise.
    pub fn is_reparameterizable(self) -> bool {
        self != ChannelKind::Poisson
    }
}

/// A channel law with its transmitter constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    pub constraints: Vec<ConstraintSpec>,
    pub noise_sigma: f64,
    pub dark_current: f64,
}

impl ChannelSpec {
    pub fn new(kind: ChannelKind, constraints: Vec<ConstraintSpec>, noise_sigma: f64, dark_current: f64) -> Result<Self> {
        let users = if kind.is_mac() { 2 } else { 1 };
        if constraints.len() != users {
            return Err(Error::invalid(
                "constraints",
                format!("{} expects {users} constraint sets, got {}", kind.name(), constraints.len()),
            ));
        }
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(Error::invalid("noise_sigma", "must be finite and >= 0"));
        }
        if !(dark_current >= 0.0) || !dark_current.is_finite() {
            return Err(Error::invalid("dark_current", "must be finite and >= 0"));
        }
        if kind == ChannelKind::Poisson && !constraints[0].nonneg() {
            return Err(Error::InfeasibleConstraint("the Poisson channel requires nonnegative inputs".into()));
        }
        Ok(Self {
            kind,
            constraints,
            noise_sigma,
            dark_current,
        })
    }

    /// AWGN with average power `p` and unit noise.
    pub fn awgn(p: f64) -> Result<Self> {
        Self::new(ChannelKind::Awgn, alloc::vec![ConstraintSpec::average_power(p)?], 1.0, 0.0)
    }

    /// AWGN with an amplitude limit `peak` and average power `p`.
    pub fn ppc(p: f64, peak: f64) -> Result<Self> {
        Self::new(
            ChannelKind::PpcAwgn,
            alloc::vec![ConstraintSpec::new(Some(p), Some(peak), false, None)?],
            1.0,
            0.0,
        )
    }

    /// Optical intensity: nonnegative input with optional peak and mean budget.
    pub fn oi(peak: Option<f64>, mean_budget: Option<f64>, sigma: f64) -> Result<Self> {
        Self::new(
            ChannelKind::Oi,
            alloc::vec![ConstraintSpec::new(None, peak, true, mean_budget)?],
            sigma,
            0.0,
        )
    }

    pub fn poisson(peak: f64, mean_budget: Option<f64>, dark_current: f64) -> Result<Self> {
        Self::new(
            ChannelKind::Poisson,
            alloc::vec![ConstraintSpec::new(None, Some(peak), true, mean_budget)?],
            0.0,
            dark_current,
        )
    }

    pub fn awgn_mac(p1: f64, p2: f64) -> Result<Self> {
        Self::new(
            ChannelKind::AwgnMac,
            alloc::vec![ConstraintSpec::average_power(p1)?, ConstraintSpec::average_power(p2)?],
            1.0,
            0.0,
        )
    }

    pub fn oi_mac(peaks: [f64; 2], means: [f64; 2], sigma: f64) -> Result<Self> {
        Self::new(
            ChannelKind::OiMac,
            alloc::vec![
                ConstraintSpec::new(None, Some(peaks[0]), true, Some(means[0]))?,
                ConstraintSpec::new(None, Some(peaks[1]), true, Some(means[1]))?,
            ],
            sigma,
            0.0,
        )
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("sigma", format!("noise standard deviation {sigma} must be finite and >= 0")))
    }
}

/// `n` i.i.d. Normal(0, sigma²) draws shaped like a `[rows, cols]` tensor.
pub fn gaussian_noise(rows: usize, cols: usize, sigma: f64, rng: &mut RngStream) -> Result<Tensor> {
    check_sigma(sigma)?;
    let data = (0..rows * cols).map(|_| sigma * rng.normal()).collect();
    Tensor::new(rows, cols, data)
}

/// `y = x + z` with `z ~ Normal(0, sigma²)` i.i.d.
pub fn awgn_forward(x: &Tensor, sigma: f64, rng: &mut RngStream) -> Result<Tensor> {
    let mut y = gaussian_noise(x.rows(), x.cols(), sigma, rng)?;
    for (o, xi) in y.data_mut().iter_mut().zip(x.data()) {
        *o += xi;
    }
    Ok(y)
}

/// `y_n ~ Poisson(x_n + λ0)` independently.
pub fn poisson_forward(x: &Tensor, dark_current: f64, rng: &mut RngStream) -> Result<Tensor> {
    if let Some((index, &value)) = x.data().iter().enumerate().find(|(_, &v)| !(v >= 0.0)) {
        return Err(Error::NegativeInput { index, value });
    }
    if !(dark_current >= 0.0) {
        return Err(Error::invalid("dark_current", "must be >= 0"));
    }
    let mut y = Vec::with_capacity(x.len());
    for &xi in x.data() {
        y.push(rng.poisson(xi + dark_current)? as f64);
    }
    Tensor::new(x.rows(), x.cols(), y)
}

/// `y = x1 + x2 + z`.
pub fn mac_forward(x1: &Tensor, x2: &Tensor, sigma: f64, rng: &mut RngStream) -> Result<Tensor> {
    if x1.shape() != x2.shape() {
        return Err(Error::ShapeMismatch {
            context: "mac_forward",
            expected: x1.shape().to_vec(),
            found: x2.shape().to_vec(),
        });
    }
    let mut y = gaussian_noise(x1.rows(), x1.cols(), sigma, rng)?;
    for ((o, a), b) in y.data_mut().iter_mut().zip(x1.data()).zip(x2.data()) {
        *o += a + b;
    }
    Ok(y)
}

/// Poisson log-likelihood `y ln(x + λ0) − (x + λ0)` recorded on the tape, up
/// to the constant `−ln y!`. Used for likelihood-ratio gradients.
pub fn poisson_log_likelihood(tape: &mut Tape, x: Var, y: &Tensor, dark_current: f64) -> Result<Var> {
    let rate = tape.offset(x, dark_current);
    let safe = tape.clamp(rate, RESCALE_FLOOR, f64::INFINITY);
    let log_rate = tape.ln(safe);
    let yv = tape.constant(y.clone());
    let term = tape.mul(yv, log_rate)?;
    tape.sub(term, rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn var(xs: &[f64]) -> f64 {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
    }

    #[test]
    fn constraint_validation() {
        assert!(ConstraintSpec::new(None, None, false, None).is_err());
        assert!(ConstraintSpec::new(None, Some(3.0), true, Some(4.0)).is_err());
        assert!(ConstraintSpec::new(None, None, false, Some(1.0)).is_err());
        assert!(ConstraintSpec::new(Some(-1.0), None, false, None).is_err());
        let c = ConstraintSpec::new(None, Some(4.0), true, Some(2.0)).unwrap();
        assert_eq!(c.alpha(), Some(0.5));
        assert!(ChannelSpec::new(ChannelKind::AwgnMac, vec![ConstraintSpec::average_power(1.0).unwrap()], 1.0, 0.0).is_err());
        assert!(ChannelSpec::new(ChannelKind::Poisson, vec![ConstraintSpec::average_power(1.0).unwrap()], 0.0, 0.0).is_err());
    }

    #[test]
    fn feasible_batch_unchanged() {
        let c = ConstraintSpec::average_power(1.0).unwrap();
        let x = Tensor::column(vec![0.5, -0.5, 1.0]);
        assert_eq!(project_constraints(&x, &c).unwrap(), x);
    }

    #[test]
    fn power_rescale_is_exact() {
        let c = ConstraintSpec::average_power(1.0).unwrap();
        let x = Tensor::column(vec![2.0, -2.0, 2.0, -2.0]);
        let y = project_constraints(&x, &c).unwrap();
        assert_eq!(y.data(), &[1.0, -1.0, 1.0, -1.0]);
    }

    #[test]
    fn peak_nonneg_range() {
        let c = ConstraintSpec::new(None, Some(5.0), true, None).unwrap();
        let x = Tensor::column(vec![-100.0, 3.0, 1e9, f64::MAX]);
        let y = project_constraints(&x, &c).unwrap();
        assert!(y.data().iter().all(|&v| (0.0..=5.0).contains(&v)));
        assert_eq!(c.output_activation(), Activation::Sigmoid);
    }

    #[test]
    fn tape_projection_matches_plain() {
        let c = ConstraintSpec::new(Some(2.0), Some(3.0), true, Some(1.0)).unwrap();
        let x = Tensor::column(vec![0.5, 2.5, 2.9, 1.7, 4.0]);
        let plain = project_constraints(&x, &c).unwrap();
        let mut tape = Tape::new();
        let v = tape.param(x);
        let p = project_on_tape(&mut tape, v, &c);
        for (a, b) in tape.value(p).data().iter().zip(plain.data()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(c.is_satisfied(plain.data(), 1e-9));
    }

    #[test]
    fn awgn_noise_free_and_variance() {
        let mut rng = RngStream::new(1);
        let x = Tensor::column(vec![1.0, -2.0, 3.0]);
        assert_eq!(awgn_forward(&x, 0.0, &mut rng).unwrap(), x);
        assert!(awgn_forward(&x, -1.0, &mut rng).is_err());
        let z = awgn_forward(&Tensor::zeros(1_000_000, 1), 1.0, &mut rng).unwrap();
        let v = var(z.data());
        assert!((0.99..=1.01).contains(&v));
    }

    #[test]
    fn awgn_second_moment_of_noise() {
        let mut rng = RngStream::new(4);
        let x = Tensor::column((0..1_000_000).map(|i| (i % 7) as f64 - 3.0).collect());
        let sigma = 0.7;
        let y = awgn_forward(&x, sigma, &mut rng).unwrap();
        let m2 = y.data().iter().zip(x.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 1e6;
        assert!((m2 / (sigma * sigma) - 1.0).abs() < 0.01);
    }

    #[test]
    fn poisson_means_and_errors() {
        let mut rng = RngStream::new(2);
        let n = 200_000;
        let y = poisson_forward(&Tensor::filled(n, 1, 3.0), 0.0, &mut rng).unwrap();
        assert!((y.mean() - 3.0).abs() < 4.0 * (3.0 / n as f64).sqrt());
        let y = poisson_forward(&Tensor::filled(n, 1, 3.0), 10.0, &mut rng).unwrap();
        assert!((y.mean() - 13.0).abs() < 4.0 * (13.0 / n as f64).sqrt());
        let y = poisson_forward(&Tensor::zeros(1000, 1), 0.0, &mut rng).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        assert_eq!(
            poisson_forward(&Tensor::column(vec![1.0, -0.5]), 0.0, &mut rng),
            Err(Error::NegativeInput { index: 1, value: -0.5 })
        );
    }

    #[test]
    fn mac_is_additive() {
        let mut rng = RngStream::new(3);
        let y = mac_forward(&Tensor::scalar(1.0), &Tensor::scalar(2.0), 0.0, &mut rng).unwrap();
        assert_eq!(y.data(), &[3.0]);
        assert!(mac_forward(&Tensor::zeros(2, 1), &Tensor::zeros(3, 1), 1.0, &mut rng).is_err());

        let a = Tensor::column(vec![0.3, -1.2, 5.0]);
        let b = Tensor::column(vec![1.0, 2.0, 3.0]);
        let y1 = mac_forward(&a, &b, 1.0, &mut RngStream::new(8)).unwrap();
        let y0 = mac_forward(&Tensor::zeros(3, 1), &b, 1.0, &mut RngStream::new(8)).unwrap();
        for i in 0..3 {
            assert!((y1.data()[i] - y0.data()[i] - a.data()[i]).abs() < 1e-12);
        }
    }
}
