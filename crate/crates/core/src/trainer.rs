//! Alternating critic / generator optimization, the discrete-support search
//! and the multi-trial protocol.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::channels::{gaussian_noise, poisson_forward, poisson_log_likelihood, ChannelKind, ChannelSpec, ConstraintSpec};
use crate::error::{Error, Result};
use crate::estimators::{CriticSet, EstimatorConfig, JointBatch, MiEstimate};
use crate::math;
use crate::ndt::{histogram, HistBin, NdtNet, SourceKind, SourceSpec};
use crate::numerics::{Activation, AdamConfig, RngStream, Tape, Tensor};

/// How the reported estimate of a trial is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FinalRule {
    /// The best of the trailing checkpoints, re-evaluated on fresh samples.
    MaxTrailing,
    /// The last iterate.
    Last,
}

impl FinalRule {
    pub fn name(self) -> &'static str {
        match self {
            FinalRule::MaxTrailing => "max_trailing",
            FinalRule::Last => "last",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "max_trailing" => Some(FinalRule::MaxTrailing),
            "last" => Some(FinalRule::Last),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch: usize,
    pub max_iters: usize,
    /// Iterations per moving-average window of the batch estimate.
    pub plateau_window: usize,
    /// Relative change between consecutive windows counted as a plateau.
    pub plateau_tol: f64,
    pub eval_size: usize,
    pub trials: usize,
    pub seed_base: u64,
    pub critic_lr: f64,
    pub ndt_lr: f64,
    pub critic_hidden: Vec<usize>,
    pub ndt_hidden: Vec<usize>,
    pub hidden_activation: Activation,
    /// Iterations between checkpoint evaluations.
    pub checkpoint_every: usize,
    /// Number of trailing checkpoints kept.
    pub checkpoint_keep: usize,
    /// Fresh samples per checkpoint evaluation.
    pub checkpoint_size: usize,
    pub final_rule: FinalRule,
    pub source: SourceKind,
    pub hist_samples: usize,
    pub hist_bins: usize,
    /// Upper limit on atoms tried by the discrete-support search.
    pub max_atoms: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch: 256,
            max_iters: 20_000,
            plateau_window: 500,
            plateau_tol: 1e-3,
            eval_size: 512_000,
            trials: 10,
            seed_base: 0,
            critic_lr: 1e-4,
            ndt_lr: 1e-4,
            critic_hidden: alloc::vec![128, 128],
            ndt_hidden: alloc::vec![128, 128],
            hidden_activation: Activation::Relu,
            checkpoint_every: 500,
            checkpoint_keep: 5,
            checkpoint_size: 16_384,
            final_rule: FinalRule::MaxTrailing,
            source: SourceKind::GaussianStd,
            hist_samples: 64_000,
            hist_bins: 100,
            max_atoms: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch < 2 {
            return Err(Error::invalid("batch", "must be >= 2"));
        }
        if self.eval_size < self.batch {
            return Err(Error::invalid("eval_size", "must be >= batch"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials", "must be >= 1"));
        }
        if self.max_iters == 0 || self.plateau_window == 0 || self.checkpoint_every == 0 || self.checkpoint_keep == 0 {
            return Err(Error::invalid("max_iters", "iteration counts must be positive"));
        }
        if self.checkpoint_size < 2 {
            return Err(Error::invalid("checkpoint_size", "must be >= 2"));
        }
        if !(self.plateau_tol >= 0.0) {
            return Err(Error::invalid("plateau_tol", "must be >= 0"));
        }
        if !(self.critic_lr > 0.0) || !(self.ndt_lr > 0.0) {
            return Err(Error::invalid("lr", "learning rates must be > 0"));
        }
        if self.hist_bins == 0 || self.hist_samples == 0 {
            return Err(Error::invalid("hist_bins", "histogram needs samples and bins"));
        }
        Ok(())
    }

    pub fn seed(&self, trial: usize) -> u64 {
        self.seed_base.wrapping_add(trial as u64)
    }

    fn adam(lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }
}

/// Detects a plateau of the moving average of per-iteration estimates.
#[derive(Clone, Debug)]
pub struct PlateauDetector {
    window: usize,
    tol: f64,
    sum: f64,
    count: usize,
    previous: Option<f64>,
}

impl PlateauDetector {
    pub fn new(window: usize, tol: f64) -> Self {
        Self {
            window,
            tol,
            sum: 0.0,
            count: 0,
            previous: None,
        }
    }

    /// Feeds one value; returns `true` once two consecutive window means
    /// differ by at most `tol` relative to the earlier one.
    pub fn push(&mut self, v: f64) -> bool {
        self.sum += v;
        self.count += 1;
        if self.count < self.window {
            return false;
        }
        let mean = self.sum / self.count as f64;
        self.sum = 0.0;
        self.count = 0;
        let done = match self.previous {
            Some(p) => (mean - p).abs() <= self.tol * p.abs().max(1e-3),
            None => false,
        };
        self.previous = Some(mean);
        done
    }
}

/// Draws channel outputs for a batch of inputs (single-user channels).
pub fn channel_output(channel: &ChannelSpec, x: &Tensor, rng: &mut RngStream) -> Result<Tensor> {
    match channel.kind {
        ChannelKind::Poisson => poisson_forward(x, channel.dark_current, rng),
        ChannelKind::Awgn | ChannelKind::Oi | ChannelKind::PpcAwgn => {
            let mut y = gaussian_noise(x.rows(), x.cols(), channel.noise_sigma, rng)?;
            for (o, xi) in y.data_mut().iter_mut().zip(x.data()) {
                *o += xi;
            }
            Ok(y)
        }
        ChannelKind::AwgnMac | ChannelKind::OiMac => Err(Error::invalid(
            "channel",
            "multiple-access channels are trained by the mac module",
        )),
    }
}

/// Typical magnitude of a feasible input under `c`.
pub fn input_scale(c: &ConstraintSpec) -> f64 {
    let s = match (c.avg_power(), c.peak(), c.mean_budget()) {
        (Some(p), _, _) => math::sqrt(p),
        (None, Some(a), Some(m)) => math::sqrt(a * m),
        (None, Some(a), None) => a,
        (None, None, Some(m)) => m,
        (None, None, None) => 1.0,
    };
    s.max(1e-3)
}

/// Input and output scales used to normalize critic inputs on `channel`.
pub fn critic_scales(channel: &ChannelSpec) -> (f64, f64) {
    let sx = channel.constraints.iter().map(input_scale).fold(0.0, f64::max);
    let total: f64 = channel.constraints.iter().map(|c| input_scale(c).powi(2)).sum();
    let sy = match channel.kind {
        ChannelKind::Poisson => math::sqrt(total + sx + channel.dark_current),
        _ => math::sqrt(total + channel.noise_sigma * channel.noise_sigma),
    };
    (sx, sy.max(1e-3))
}

/// One trained trial.
#[derive(Clone)]
pub struct TrialResult {
    pub index: usize,
    pub seed: u64,
    /// `None` when the trial diverged.
    pub estimate: Option<MiEstimate>,
    pub error: Option<String>,
    /// Iteration at which the plateau rule fired, if it did.
    pub converged_iter: Option<usize>,
    pub iterations: usize,
    pub checkpoints: Vec<(usize, f64)>,
    pub clamped: usize,
    pub ndt: Option<NdtNet>,
    pub critics: Option<CriticSet>,
}

/// The generator and critics of a trial in progress.
#[derive(Clone)]
pub struct Model {
    pub ndt: NdtNet,
    pub critics: CriticSet,
}

impl Model {
    pub fn new(channel: &ChannelSpec, estimator: &EstimatorConfig, train: &TrainConfig, source: &SourceSpec, rng: &mut RngStream) -> Result<Self> {
        let ndt = NdtNet::new(
            channel.constraints[0],
            source.dim,
            &train.ndt_hidden,
            train.hidden_activation,
            TrainConfig::adam(train.ndt_lr),
            rng,
        )?;
        let mut critics = CriticSet::new(
            *estimator,
            1,
            1,
            &train.critic_hidden,
            train.hidden_activation,
            TrainConfig::adam(train.critic_lr),
            rng,
        )?;
        critics.set_eval_block(train.batch);
        let (sx, sy) = critic_scales(channel);
        critics.set_input_scale(sx, sy)?;
        Ok(Self { ndt, critics })
    }

    /// Phase 1: one critic update on a fresh batch; the generator is read only.
    pub fn critic_step(&mut self, channel: &ChannelSpec, source: &SourceSpec, batch: usize, rng: &mut RngStream) -> Result<f64> {
        let s = source.sample(batch, rng);
        let x = self.ndt.transform(&s)?;
        let y = channel_output(channel, &x, rng)?;
        self.critics.train_step(&x, &y, rng)
    }

    /// Phase 2: one generator update on a fresh batch; the critics are frozen.
    pub fn generator_step(&mut self, channel: &ChannelSpec, source: &SourceSpec, batch: usize, rng: &mut RngStream) -> Result<f64> {
        let mut tape = Tape::new();
        let s = tape.constant(source.sample(batch, rng));
        let (x, bound) = self.ndt.forward_on_tape(&mut tape, s, true)?;
        let loss = if channel.kind.is_reparameterizable() {
            let z = gaussian_noise(batch, 1, channel.noise_sigma, rng)?;
            let z = tape.constant(z);
            let y = tape.add(x, z)?;
            let terms = self.critics.build(&mut tape, x, y, false, rng)?;
            tape.neg(terms.objective)
        } else {
            // Likelihood-ratio gradient: outputs are not differentiable in x.
            let y_val = poisson_forward(tape.value(x), channel.dark_current, rng)?;
            let y = tape.constant(y_val.clone());
            let terms = self.critics.build(&mut tape, x, y, false, rng)?;
            let d = tape.value(terms.density).data().to_vec();
            let baseline = d.iter().sum::<f64>() / d.len() as f64;
            let coef = tape.constant(Tensor::column(d.iter().map(|v| v - baseline).collect()));
            let ll = poisson_log_likelihood(&mut tape, x, &y_val, channel.dark_current)?;
            let weighted = tape.mul(coef, ll)?;
            let m = tape.mean(weighted);
            tape.neg(m)
        };
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Ok(f64::NAN);
        }
        tape.backward(loss)?;
        self.ndt.apply_gradients(&tape, &bound)?;
        Ok(-value)
    }

    /// Estimate on `n` fresh samples with frozen parameters.
    pub fn evaluate(&self, channel: &ChannelSpec, source: &SourceSpec, n: usize, rng: &mut RngStream) -> Result<MiEstimate> {
        eval_final(&self.ndt, &self.critics, channel, source, n, rng)
    }
}

/// Single large-sample estimate with frozen generator and critics.
pub fn eval_final(
    net: &NdtNet,
    critics: &CriticSet,
    channel: &ChannelSpec,
    source: &SourceSpec,
    n: usize,
    rng: &mut RngStream,
) -> Result<MiEstimate> {
    let s = source.sample(n, rng);
    let x = net.transform(&s)?;
    let y = channel_output(channel, &x, rng)?;
    critics.evaluate(&JointBatch::new(x, y)?, rng)
}

/// Runs Algorithm 1 for a single trial with seed `train.seed(index)`.
pub fn run_trial(channel: &ChannelSpec, estimator: &EstimatorConfig, train: &TrainConfig, source: &SourceSpec, index: usize) -> TrialResult {
    let seed = train.seed(index);
    let mut result = TrialResult {
        index,
        seed,
        estimate: None,
        error: None,
        converged_iter: None,
        iterations: 0,
        checkpoints: Vec::new(),
        clamped: 0,
        ndt: None,
        critics: None,
    };
    match train_trial(channel, estimator, train, source, seed, &mut result) {
        Ok((model, estimate)) => {
            result.clamped = model.critics.clamped();
            result.estimate = Some(estimate);
            result.ndt = Some(model.ndt);
            result.critics = Some(model.critics);
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    result
}

fn train_trial(
    channel: &ChannelSpec,
    estimator: &EstimatorConfig,
    train: &TrainConfig,
    source: &SourceSpec,
    seed: u64,
    out: &mut TrialResult,
) -> Result<(Model, MiEstimate)> {
    train.validate()?;
    let mut init_rng = RngStream::new(seed).substream(1);
    let mut rng = RngStream::new(seed);
    let mut eval_rng = RngStream::new(seed).substream(2);
    let mut model = Model::new(channel, estimator, train, source, &mut init_rng)?;
    let mut plateau = PlateauDetector::new(train.plateau_window, train.plateau_tol);
    let mut trailing: Vec<(usize, f64, Model)> = Vec::new();

    for it in 1..=train.max_iters {
        let v = model.critic_step(channel, source, train.batch, &mut rng)?;
        if !v.is_finite() {
            return Err(Error::NonFiniteLoss(it));
        }
        let g = model.generator_step(channel, source, train.batch, &mut rng)?;
        if !g.is_finite() {
            return Err(Error::NonFiniteLoss(it));
        }
        out.iterations = it;
        let converged = plateau.push(v);
        if it % train.checkpoint_every == 0 || converged || it == train.max_iters {
            let e = model.evaluate(channel, source, train.checkpoint_size, &mut eval_rng)?;
            if !e.value.is_finite() {
                return Err(Error::NonFiniteLoss(it));
            }
            out.checkpoints.push((it, e.value));
            if train.final_rule == FinalRule::MaxTrailing {
                trailing.push((it, e.value, model.clone()));
                if trailing.len() > train.checkpoint_keep {
                    trailing.remove(0);
                }
            }
        }
        if converged {
            out.converged_iter = Some(it);
            break;
        }
    }

    let chosen = match train.final_rule {
        FinalRule::Last => model,
        FinalRule::MaxTrailing => {
            let best = trailing
                .into_iter()
                .fold(None::<(f64, Model)>, |acc, (_, v, m)| match acc {
                    Some((bv, bm)) if bv >= v => Some((bv, bm)),
                    _ => Some((v, m)),
                })
                .expect("at least one checkpoint");
            best.1
        }
    };
    let estimate = chosen.evaluate(channel, source, train.eval_size, &mut eval_rng)?;
    if !estimate.value.is_finite() {
        return Err(Error::NonFiniteLoss(out.iterations));
    }
    Ok((chosen, estimate))
}

/// Aggregated outcome of a multi-trial run.
#[derive(Clone)]
pub struct CapacityRunResult {
    pub trials: Vec<TrialResult>,
    pub mean: f64,
    /// Sample standard deviation, present with at least two successful trials.
    pub std: Option<f64>,
    pub failed: usize,
    pub histogram: Vec<HistBin>,
    /// Trial whose generator produced the histogram.
    pub histogram_trial: usize,
    pub final_rule: FinalRule,
    pub source: SourceSpec,
}

impl CapacityRunResult {
    pub fn estimates(&self) -> Vec<f64> {
        self.trials.iter().filter_map(|t| t.estimate.as_ref().map(|e| e.value)).collect()
    }

    pub fn best_trial(&self) -> Option<&TrialResult> {
        self.trials.iter().find(|t| t.index == self.histogram_trial)
    }
}

/// Combines trial results in trial-index order. Fails when more than half
/// of the trials diverged.
pub fn aggregate(mut trials: Vec<TrialResult>, train: &TrainConfig, source: &SourceSpec) -> Result<CapacityRunResult> {
    trials.sort_by_key(|t| t.index);
    let failed = trials.iter().filter(|t| t.estimate.is_none()).count();
    if trials.is_empty() || 2 * failed > trials.len() {
        return Err(Error::RunFailed {
            failed,
            trials: trials.len(),
        });
    }
    let values: Vec<f64> = trials.iter().filter_map(|t| t.estimate.as_ref().map(|e| e.value)).collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() >= 2).then(|| math::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)));

    let best = trials
        .iter()
        .filter(|t| t.estimate.is_some())
        .fold(None::<&TrialResult>, |acc, t| match acc {
            Some(b) if b.estimate.as_ref().unwrap().value >= t.estimate.as_ref().unwrap().value => Some(b),
            _ => Some(t),
        })
        .expect("at least one success");
    let mut hist_rng = RngStream::new(best.seed).substream(3);
    let ndt = best.ndt.as_ref().expect("successful trials keep their generator");
    let xs = ndt.transform(&source.sample(train.hist_samples, &mut hist_rng))?;
    let histogram = histogram(xs.data(), train.hist_bins)?;
    let histogram_trial = best.index;

    Ok(CapacityRunResult {
        trials,
        mean,
        std,
        failed,
        histogram,
        histogram_trial,
        final_rule: train.final_rule,
        source: *source,
    })
}

/// Algorithm 1 over `train.trials` trials with the configured source.
pub fn run_nce(channel: &ChannelSpec, estimator: &EstimatorConfig, train: &TrainConfig) -> Result<CapacityRunResult> {
    run_with_source(channel, estimator, train, &SourceSpec { kind: train.source, dim: 1 })
}

pub fn run_with_source(channel: &ChannelSpec, estimator: &EstimatorConfig, train: &TrainConfig, source: &SourceSpec) -> Result<CapacityRunResult> {
    if channel.kind.is_mac() {
        return Err(Error::invalid("channel", "use the mac module for multiple-access channels"));
    }
    estimator.validate()?;
    train.validate()?;
    let trials = (0..train.trials).map(|i| run_trial(channel, estimator, train, source, i)).collect();
    aggregate(trials, train, source)
}

/// Outcome of the discrete-support search.
#[derive(Clone)]
pub struct DiscreteSearchResult {
    /// The run whose estimate is returned.
    pub result: CapacityRunResult,
    /// Number of source atoms of the returned run.
    pub chosen_m: usize,
    /// `(m, mean estimate)` for every atom count tried.
    pub history: Vec<(usize, f64)>,
}

/// Algorithm 2: start from two atoms and add one while the estimate improves;
/// return the last run before the estimate stopped improving.
///
/// `run` maps a source to a run result so callers can schedule trials.
pub fn discrete_search_with(
    train: &TrainConfig,
    mut run: impl FnMut(&SourceSpec) -> Result<CapacityRunResult>,
) -> Result<DiscreteSearchResult> {
    let max_atoms = train.max_atoms.max(2);
    let mut history = Vec::new();
    let mut m = 2;
    let mut current = run(&SourceSpec::discrete(m, 1)?)?;
    history.push((m, current.mean));
    let mut previous: Option<CapacityRunResult> = None;
    let mut c_prev = 0.0;
    while current.mean > c_prev {
        if m >= max_atoms {
            return Ok(DiscreteSearchResult {
                result: current,
                chosen_m: m,
                history,
            });
        }
        c_prev = current.mean;
        m += 1;
        let next = run(&SourceSpec::discrete(m, 1)?)?;
        history.push((m, next.mean));
        previous = Some(core::mem::replace(&mut current, next));
    }
    match previous {
        Some(result) => Ok(DiscreteSearchResult {
            result,
            chosen_m: m - 1,
            history,
        }),
        // The two-atom run did not beat zero; report it as is.
        None => Ok(DiscreteSearchResult {
            result: current,
            chosen_m: 2,
            history,
        }),
    }
}

pub fn run_discrete_search(channel: &ChannelSpec, estimator: &EstimatorConfig, train: &TrainConfig) -> Result<DiscreteSearchResult> {
    discrete_search_with(train, |source| run_with_source(channel, estimator, train, source))
}

/// Human-readable description of the final-estimate rule for output metadata.
pub fn final_rule_description(train: &TrainConfig) -> String {
    match train.final_rule {
        FinalRule::MaxTrailing => format!(
            "best of the last {} checkpoints (every {} iterations, {} samples each), re-evaluated on {} fresh samples",
            train.checkpoint_keep, train.checkpoint_every, train.checkpoint_size, train.eval_size
        ),
        FinalRule::Last => format!("last iterate evaluated on {} fresh samples", train.eval_size),
    }
}
