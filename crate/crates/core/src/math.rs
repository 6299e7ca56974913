//! Scalar special functions on top of `libm`, usable without `std`.

pub use core::f64::consts::{E, LN_2, PI};

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn ln1p(x: f64) -> f64 {
    libm::log1p(x)
}

#[inline]
pub fn expm1(x: f64) -> f64 {
    libm::expm1(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Logistic function, stable for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + ln1p(exp(-x))
    } else {
        ln1p(exp(x))
    }
}

/// Standard normal tail probability `Q(x) = P[Z > x]`.
pub fn normal_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / core::f64::consts::SQRT_2)
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    normal_tail(-x)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    exp(-0.5 * x * x) / sqrt(2.0 * PI)
}

/// Binary entropy in nats, `H2(0) = H2(1) = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * ln(q) };
    term(p) + term(1.0 - p)
}

/// Converts a decibel figure to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    powf(10.0, db / 10.0)
}

/// Converts a linear power ratio to decibels.
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * libm::log10(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_entropy_peaks_at_half() {
        assert!((binary_entropy(0.5) - LN_2).abs() < 1e-15);
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
    }

    #[test]
    fn normal_tail_known_values() {
        assert!((normal_tail(0.0) - 0.5).abs() < 1e-15);
        // Q(1.96) = 0.0249979
        assert!((normal_tail(1.96) - 0.024_997_895_148_220_4).abs() < 1e-12);
        assert!(normal_tail(40.0) < 1e-300);
    }

    #[test]
    fn stable_logistics() {
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!((softplus(0.0) - LN_2).abs() < 1e-15);
    }

    #[test]
    fn db_round_trip() {
        assert!((db_to_linear(20.0) - 100.0).abs() < 1e-12);
        assert!((linear_to_db(db_to_linear(2.0)) - 2.0).abs() < 1e-12);
    }
}
