//! The neural distribution transformer: source samples `S` pushed through an
//! MLP and a constraint layer to give feasible channel inputs `X`.

use alloc::vec::Vec;

use crate::channels::{project_constraints, project_on_tape, ConstraintSpec};
use crate::error::{Error, Result};
use crate::numerics::{Activation, AdamConfig, AdamState, BoundMlp, Mlp, RngStream, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceKind {
    /// Standard normal, independent per dimension.
    GaussianStd,
    /// Uniform over the atoms `{0, 1, ..., m - 1}`.
    DiscreteUniform { m: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub dim: usize,
}

impl SourceSpec {
    pub fn gaussian(dim: usize) -> Self {
        Self {
            kind: SourceKind::GaussianStd,
            dim,
        }
    }

    pub fn discrete(m: usize, dim: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::invalid("m", "a discrete source needs at least two atoms"));
        }
        Ok(Self {
            kind: SourceKind::DiscreteUniform { m },
            dim,
        })
    }

    pub fn atoms(&self) -> Option<usize> {
        match self.kind {
            SourceKind::DiscreteUniform { m } => Some(m),
            SourceKind::GaussianStd => None,
        }
    }

    /// `n` i.i.d. source draws as an `[n, dim]` tensor.
    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Tensor {
        let data = (0..n * self.dim)
            .map(|_| match self.kind {
                SourceKind::GaussianStd => rng.normal(),
                SourceKind::DiscreteUniform { m } => rng.below(m) as f64,
            })
            .collect();
        Tensor::new(n, self.dim, data).expect("sized by construction")
    }
}

/// Generator network bound to one transmitter's constraints.
#[derive(Clone)]
pub struct NdtNet {
    net: Mlp,
    constraint: ConstraintSpec,
    adam: AdamState,
}

impl NdtNet {
    /// The final activation follows the support of the constraint: sigmoid
    /// for `[0, A]`, tanh for `[−A, A]`, softplus for `[0, ∞)` and identity
    /// otherwise. The output is multiplied by
    /// [`ConstraintSpec::output_scale`] and the batch projection enforces the
    /// moment budgets.
    pub fn new(
        constraint: ConstraintSpec,
        source_dim: usize,
        hidden: &[usize],
        hidden_act: Activation,
        adam: AdamConfig,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let net = Mlp::new(source_dim, hidden, 1, hidden_act, constraint.output_activation(), rng)?;
        let adam = AdamState::new(adam, net.param_names("ndt"), &net.param_sizes());
        Ok(Self { net, constraint, adam })
    }

    pub fn constraint(&self) -> &ConstraintSpec {
        &self.constraint
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn snapshot(&self) -> Vec<f64> {
        self.net.params().into_iter().flat_map(|p| p.iter().copied()).collect()
    }

    /// Records `s ↦ x` on the tape. Parameters are trainable when `trainable`.
    pub fn forward_on_tape(&self, tape: &mut Tape, s: Var, trainable: bool) -> Result<(Var, BoundMlp)> {
        let bound = self.net.bind(tape, trainable);
        let raw = self.net.forward(tape, &bound, s)?;
        let scale = self.constraint.output_scale();
        let scaled = if scale == 1.0 { raw } else { tape.scale(raw, scale) };
        Ok((project_on_tape(tape, scaled, &self.constraint), bound))
    }

    /// Tape-free transform of a batch of source samples.
    pub fn transform(&self, s: &Tensor) -> Result<Tensor> {
        let scale = self.constraint.output_scale();
        let raw = self.net.eval(s)?.map(|v| v * scale);
        project_constraints(&raw, &self.constraint)
    }

    pub fn apply_gradients(&mut self, tape: &Tape, bound: &BoundMlp) -> Result<()> {
        let grads = self.net.grads(tape, bound);
        let mut params = self.net.params_mut();
        self.adam.update(&mut params, &grads)
    }
}

/// `n` channel-input samples drawn through the transformer.
pub fn ndt_sample(net: &NdtNet, source: &SourceSpec, n: usize, rng: &mut RngStream) -> Result<Tensor> {
    if n == 0 {
        return Err(Error::invalid("n", "need at least one sample"));
    }
    net.transform(&source.sample(n, rng))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

/// Equal-width histogram over `[min, max]`; the maximum falls in the last bin.
/// Constant samples put every count in the first bin.
pub fn histogram(samples: &[f64], bins: usize) -> Result<Vec<HistBin>> {
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    if bins == 0 {
        return Err(Error::invalid("bins", "need at least one bin"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("samples", "histogram input must be finite"));
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut counts = alloc::vec![0usize; bins];
    for &v in samples {
        let k = if width > 0.0 {
            (((v - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[k] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistBin {
            left: lo + width * k as f64,
            right: if k + 1 == bins { hi } else { lo + width * (k + 1) as f64 },
            count,
        })
        .collect())
}
