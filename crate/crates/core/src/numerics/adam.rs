use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction, one moment buffer per named parameter.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    t: u64,
    names: Vec<String>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, names: Vec<String>, sizes: &[usize]) -> Self {
        assert_eq!(names.len(), sizes.len());
        Self {
            config,
            t: 0,
            names,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one descent step `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
    ///
    /// All gradients are checked before any parameter moves, so a NaN leaves
    /// the parameters and moments untouched.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                context: "adam_update",
                expected: vec![self.m.len()],
                found: vec![params.len(), grads.len()],
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(Error::ShapeMismatch {
                    context: "adam_update",
                    expected: vec![self.m[i].len()],
                    found: vec![p.len(), g.len()],
                });
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient(self.names[i].clone()));
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - math::powf(beta1, self.t as f64);
        let c2 = 1.0 - math::powf(beta2, self.t as f64);
        for (i, p) in params.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[i], &mut self.v[i], &grads[i]);
            for k in 0..p.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                p[k] -= lr * mh / (math::sqrt(vh) + eps);
            }
        }
        Ok(())
    }
}
