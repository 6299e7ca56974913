//! Seeded random streams built on ChaCha8.

use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::math;

/// Means above this use the PTRS rejection sampler instead of inversion.
const POISSON_INVERSION_MAX: f64 = 30.0;

/// A reproducible random stream: the same seed and call sequence always give
/// the same samples.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// An independent stream sharing this seed, selected by `stream`.
    pub fn substream(&self, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream);
        Self { seed: self.seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Uniform integer in `0..n` (Lemire's method without bias).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.inner.next_u64();
            let m = (x as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    /// Uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            p.swap(i, j);
        }
        p
    }

    /// Random permutation of `0..n` without fixed points (Sattolo's cycle), `n >= 2`.
    pub fn derangement(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i);
            p.swap(i, j);
        }
        p
    }

    /// One Poisson draw. Inversion for small means, PTRS above.
    pub fn poisson(&mut self, mean: f64) -> Result<u64> {
        if !(mean >= 0.0) || !mean.is_finite() {
            return Err(Error::invalid("mean", "Poisson mean must be finite and nonnegative"));
        }
        if mean == 0.0 {
            return Ok(0);
        }
        if mean <= POISSON_INVERSION_MAX {
            return Ok(self.poisson_inversion(mean));
        }
        Ok(self.poisson_ptrs(mean))
    }

    fn poisson_inversion(&mut self, mean: f64) -> u64 {
        let u = self.uniform();
        let mut k = 0u64;
        let mut p = math::exp(-mean);
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
            if p == 0.0 && cdf < u {
                // Rounding left u above the summed mass; restart with a fresh draw.
                return self.poisson_inversion(mean);
            }
        }
        k
    }

    /// Transformed rejection with squeeze (Hörmann, 1993).
    fn poisson_ptrs(&mut self, mean: f64) -> u64 {
        let slam = math::sqrt(mean);
        let loglam = math::ln(mean);
        let b = 0.931 + 2.53 * slam;
        let a = -0.059 + 0.02483 * b;
        let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        let vr = 0.9277 - 3.6224 / (b - 2.0);
        loop {
            let u = self.uniform() - 0.5;
            let v = self.uniform();
            let us = 0.5 - math::abs(u);
            let k = math::floor((2.0 * a / us + b) * u + mean + 0.43);
            if us >= 0.07 && v <= vr {
                return k as u64;
            }
            if k < 0.0 || (us < 0.013 && v > us) {
                continue;
            }
            let lhs = math::ln(v) + math::ln(inv_alpha) - math::ln(a / (us * us) + b);
            let rhs = -mean + k * loglam - math::ln_gamma(k + 1.0);
            if lhs <= rhs {
                return k as u64;
            }
        }
    }
}

/// `n` i.i.d. Poisson(`mean`) draws as a `[n, 1]` column of counts.
pub fn sample_poisson(rng: &mut RngStream, mean: f64, n: usize) -> Result<Tensor> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(rng.poisson(mean)? as f64);
    }
    Ok(Tensor::column(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RngStream::new(5);
        let mut b = RngStream::new(5);
        for _ in 0..100 {
            assert_eq!(a.normal().to_bits(), b.normal().to_bits());
            assert_eq!(a.poisson(40.0).unwrap(), b.poisson(40.0).unwrap());
        }
        assert_eq!(a.counter(), b.counter());
        assert_ne!(RngStream::new(6).uniform(), RngStream::new(5).uniform());
    }

    #[test]
    fn substreams_differ() {
        let base = RngStream::new(1);
        let mut s0 = base.substream(0);
        let mut s1 = base.substream(1);
        assert_ne!(s0.uniform(), s1.uniform());
    }

    #[test]
    fn derangement_has_no_fixed_points() {
        let mut rng = RngStream::new(3);
        for n in 2..40 {
            let d = rng.derangement(n);
            assert!(d.iter().enumerate().all(|(i, &j)| i != j));
            let mut s = d.clone();
            s.sort_unstable();
            assert_eq!(s, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn poisson_rejects_negative_mean() {
        let mut rng = RngStream::new(0);
        assert!(sample_poisson(&mut rng, -1.0, 3).is_err());
        assert!(sample_poisson(&mut rng, f64::NAN, 3).is_err());
    }

    #[test]
    fn poisson_zero_mean_is_zero() {
        let mut rng = RngStream::new(0);
        let t = sample_poisson(&mut rng, 0.0, 1000).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ptrs_moments() {
        let mut rng = RngStream::new(9);
        let n = 200_000;
        let t = sample_poisson(&mut rng, 100.0, n).unwrap();
        let m = t.mean();
        let var = t.data().iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
        assert!((m - 100.0).abs() < 4.0 * (100.0 / n as f64).sqrt());
        assert!((var / 100.0 - 1.0).abs() < 0.02);
    }
}
