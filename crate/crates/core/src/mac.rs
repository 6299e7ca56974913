//! Two-user multiple-access channels: sum-rate training with two independent
//! generators and corner points from mutual-information differences.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::bounds::RateRegion;
use crate::channels::{gaussian_noise, mac_forward, ChannelSpec};
use crate::error::{Error, Result};
use crate::estimators::formulas::{dv_value, Measure, EXP_CLAMP};
use crate::estimators::{gaussian_reference, CriticSet, EstimatorConfig, JointBatch};
use crate::math;
use crate::ndt::{NdtNet, SourceSpec};
use crate::numerics::{Activation, AdamConfig, AdamState, Mlp, RngStream, Tape, Tensor};
use crate::trainer::{critic_scales, FinalRule, PlateauDetector, TrainConfig};

/// Rates of one MAC estimate, nats.
#[derive(Clone, Debug, PartialEq)]
pub struct MacEstimate {
    /// `I(X1, X2; Y)`.
    pub i_sum: f64,
    /// `I(X1; Y | X2) = i_sum − i_y2`.
    pub i1: f64,
    /// `I(X2; Y | X1) = i_sum − i_y1`.
    pub i2: f64,
    pub i_y1: f64,
    pub i_y2: f64,
    pub pentagon: RateRegion,
}

impl MacEstimate {
    /// Builds the estimate from the three directly estimated quantities.
    pub fn from_parts(i_sum: f64, i_y1: f64, i_y2: f64) -> Result<Self> {
        if ![i_sum, i_y1, i_y2].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("mac estimate", "all rates must be finite"));
        }
        let i1 = i_sum - i_y2;
        let i2 = i_sum - i_y1;
        Ok(Self {
            i_sum,
            i1,
            i2,
            i_y1,
            i_y2,
            pentagon: RateRegion::pentagon(i1, i2, i_sum),
        })
    }
}

/// Generators and critics of one MAC trial.
#[derive(Clone)]
pub struct MacModel {
    pub ndt1: NdtNet,
    pub ndt2: NdtNet,
    /// Critics on `((x1, x2), y)`, `(x1, y)` and `(x2, y)`.
    pub sum: CriticSet,
    pub user1: CriticSet,
    pub user2: CriticSet,
}

fn check_mac(channel: &ChannelSpec) -> Result<()> {
    if !channel.kind.is_mac() || channel.constraints.len() != 2 {
        return Err(Error::invalid("channel", "a two-user MAC with two constraint sets is required"));
    }
    Ok(())
}

impl MacModel {
    pub fn new(channel: &ChannelSpec, estimator: &EstimatorConfig, train: &TrainConfig, rng: &mut RngStream) -> Result<Self> {
        check_mac(channel)?;
        let adam = |lr| AdamConfig {
            lr,
            ..AdamConfig::default()
        };
        let act = train.hidden_activation;
        let (sx, sy) = critic_scales(channel);
        let ndt = |c, rng: &mut RngStream| NdtNet::new(c, 1, &train.ndt_hidden, act, adam(train.ndt_lr), rng);
        let ndt1 = ndt(channel.constraints[0], rng)?;
        let ndt2 = ndt(channel.constraints[1], rng)?;
        let critic = |dx, rng: &mut RngStream| {
            let mut c = CriticSet::new(*estimator, dx, 1, &train.critic_hidden, act, adam(train.critic_lr), rng)?;
            c.set_eval_block(train.batch);
            c.set_input_scale(sx, sy)?;
            Ok::<_, Error>(c)
        };
        Ok(Self {
            ndt1,
            ndt2,
            sum: critic(2, rng)?,
            user1: critic(1, rng)?,
            user2: critic(1, rng)?,
        })
    }

    /// Independent input pairs: the users' source draws never share samples.
    pub fn sample_inputs(&self, source: &SourceSpec, n: usize, rng: &mut RngStream) -> Result<(Tensor, Tensor)> {
        let x1 = self.ndt1.transform(&source.sample(n, rng))?;
        let x2 = self.ndt2.transform(&source.sample(n, rng))?;
        Ok((x1, x2))
    }

    fn critic_step(&mut self, channel: &ChannelSpec, source: &SourceSpec, n: usize, rng: &mut RngStream) -> Result<f64> {
        let (x1, x2) = self.sample_inputs(source, n, rng)?;
        let y = mac_forward(&x1, &x2, channel.noise_sigma, rng)?;
        let x = Tensor::hstack(&[&x1, &x2])?;
        let v = self.sum.train_step(&x, &y, rng)?;
        let a = self.user1.train_step(&x1, &y, rng)?;
        let b = self.user2.train_step(&x2, &y, rng)?;
        Ok(if a.is_finite() && b.is_finite() { v } else { f64::NAN })
    }

    fn generator_step(&mut self, channel: &ChannelSpec, source: &SourceSpec, n: usize, rng: &mut RngStream) -> Result<f64> {
        let mut tape = Tape::new();
        let s1 = tape.constant(source.sample(n, rng));
        let s2 = tape.constant(source.sample(n, rng));
        let (x1, b1) = self.ndt1.forward_on_tape(&mut tape, s1, true)?;
        let (x2, b2) = self.ndt2.forward_on_tape(&mut tape, s2, true)?;
        let x = tape.concat_cols(&[x1, x2])?;
        let z = tape.constant(gaussian_noise(n, 1, channel.noise_sigma, rng)?);
        let xs = tape.add(x1, x2)?;
        let y = tape.add(xs, z)?;
        let terms = self.sum.build(&mut tape, x, y, false, rng)?;
        let loss = tape.neg(terms.objective);
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Ok(f64::NAN);
        }
        tape.backward(loss)?;
        self.ndt1.apply_gradients(&tape, &b1)?;
        self.ndt2.apply_gradients(&tape, &b2)?;
        Ok(-value)
    }

    /// All three estimates on one fresh sample of size `n`.
    pub fn evaluate(&self, channel: &ChannelSpec, source: &SourceSpec, n: usize, rng: &mut RngStream) -> Result<MacEstimate> {
        let (x1, x2) = self.sample_inputs(source, n, rng)?;
        let y = mac_forward(&x1, &x2, channel.noise_sigma, rng)?;
        let x = Tensor::hstack(&[&x1, &x2])?;
        let i_sum = self.sum.evaluate(&JointBatch::new(x, y.clone())?, rng)?.value;
        let i_y1 = self.user1.evaluate(&JointBatch::new(x1, y.clone())?, rng)?.value;
        let i_y2 = self.user2.evaluate(&JointBatch::new(x2, y)?, rng)?.value;
        MacEstimate::from_parts(i_sum, i_y1, i_y2)
    }
}

#[derive(Clone)]
pub struct MacTrial {
    pub index: usize,
    pub seed: u64,
    pub estimate: Option<MacEstimate>,
    pub error: Option<String>,
    pub converged_iter: Option<usize>,
    pub model: Option<MacModel>,
}

#[derive(Clone)]
pub struct MacRunResult {
    pub trials: Vec<MacTrial>,
    /// Built from the trial means of `i_sum`, `i_y1` and `i_y2`.
    pub mean: MacEstimate,
    /// Sample standard deviation of `i_sum` over successful trials.
    pub std_sum: Option<f64>,
    pub failed: usize,
}

fn train_mac(channel: &ChannelSpec, estimator: &EstimatorConfig, train: &TrainConfig, seed: u64, out: &mut MacTrial) -> Result<(MacModel, MacEstimate)> {
    let source = SourceSpec::gaussian(1);
    let mut init_rng = RngStream::new(seed).substream(1);
    let mut rng = RngStream::new(seed);
    let mut eval_rng = RngStream::new(seed).substream(2);
    let mut model = MacModel::new(channel, estimator, train, &mut init_rng)?;
    let mut plateau = PlateauDetector::new(train.plateau_window, train.plateau_tol);
    let mut trailing: Vec<(f64, MacModel)> = Vec::new();
    for it in 1..=train.max_iters {
        let v = model.critic_step(channel, &source, train.batch, &mut rng)?;
        let g = model.generator_step(channel, &source, train.batch, &mut rng)?;
        if !v.is_finite() || !g.is_finite() {
            return Err(Error::NonFiniteLoss(it));
        }
        let converged = plateau.push(v);
        if train.final_rule == FinalRule::MaxTrailing && (it % train.checkpoint_every == 0 || converged || it == train.max_iters) {
            let e = model.evaluate(channel, &source, train.checkpoint_size, &mut eval_rng)?;
            trailing.push((e.i_sum, model.clone()));
            if trailing.len() > train.checkpoint_keep {
                trailing.remove(0);
            }
        }
        if converged {
            out.converged_iter = Some(it);
            break;
        }
    }
    if let Some((_, best)) = trailing.into_iter().fold(None::<(f64, MacModel)>, |acc, (v, m)| match acc {
        Some((bv, bm)) if bv >= v => Some((bv, bm)),
        _ => Some((v, m)),
    }) {
        model = best;
    }
    let estimate = model.evaluate(channel, &source, train.eval_size, &mut eval_rng)?;
    Ok((model, estimate))
}

/// One MAC trial with seed `train.seed(index)`.
pub fn run_mac_trial(channel: &ChannelSpec, estimator: &EstimatorConfig, train: &TrainConfig, index: usize) -> MacTrial {
    let seed = train.seed(index);
    let mut trial = MacTrial {
        index,
        seed,
        estimate: None,
        error: None,
        converged_iter: None,
        model: None,
    };
    match train_mac(channel, estimator, train, seed, &mut trial) {
        Ok((model, e)) => {
            trial.estimate = Some(e);
            trial.model = Some(model);
        }
        Err(e) => trial.error = Some(e.to_string()),
    }
    trial
}

/// Combines trials in index order; fails when more than half diverged.
pub fn aggregate_mac(mut trials: Vec<MacTrial>) -> Result<MacRunResult> {
    trials.sort_by_key(|t| t.index);
    let ok: Vec<&MacEstimate> = trials.iter().filter_map(|t| t.estimate.as_ref()).collect();
    let failed = trials.len() - ok.len();
    if ok.is_empty() || 2 * failed > trials.len() {
        return Err(Error::RunFailed {
            failed,
            trials: trials.len(),
        });
    }
    let n = ok.len() as f64;
    let mean_of = |f: fn(&MacEstimate) -> f64| ok.iter().map(|e| f(e)).sum::<f64>() / n;
    let i_sum = mean_of(|e| e.i_sum);
    let std_sum = (ok.len() >= 2).then(|| math::sqrt(ok.iter().map(|e| (e.i_sum - i_sum).powi(2)).sum::<f64>() / (n - 1.0)));
    let mean = MacEstimate::from_parts(i_sum, mean_of(|e| e.i_y1), mean_of(|e| e.i_y2))?;
    Ok(MacRunResult {
        trials,
        mean,
        std_sum,
        failed,
    })
}

/// Sum-rate training with two independent generators over `train.trials` trials.
pub fn run_mac_nce(channel: &ChannelSpec, estimator: &EstimatorConfig, train: &TrainConfig) -> Result<MacRunResult> {
    check_mac(channel)?;
    estimator.validate()?;
    train.validate()?;
    aggregate_mac((0..train.trials).map(|i| run_mac_trial(channel, estimator, train, i)).collect())
}

/// `D(P_XYZ‖Q) + D(P_Y‖Q) − D(P_XY‖Q) − D(P_YZ‖Q)`: the conditional mutual
/// information `I(X; Z | Y)` from four divergences against independent
/// references.
pub fn cmi_from_divergences(d_xyz: f64, d_y: f64, d_xy: f64, d_yz: f64) -> f64 {
    d_xyz + d_y - d_xy - d_yz
}

/// Samples of `(X, Y, Z)` with mutually independent reference draws.
#[derive(Clone, Debug)]
pub struct CmiBatch {
    pub x: Tensor,
    pub y: Tensor,
    pub z: Tensor,
    pub x_ref: Tensor,
    pub y_ref: Tensor,
    pub z_ref: Tensor,
}

impl CmiBatch {
    /// Uses moment-matched Gaussian references.
    pub fn with_gaussian_references(x: Tensor, y: Tensor, z: Tensor, rng: &mut RngStream) -> Result<Self> {
        if x.rows() != y.rows() || x.rows() != z.rows() || x.rows() < 2 {
            return Err(Error::invalid("batch", "x, y, z need the same number (>= 2) of rows"));
        }
        let (x_ref, _) = gaussian_reference(&x, rng);
        let (y_ref, _) = gaussian_reference(&y, rng);
        let (z_ref, _) = gaussian_reference(&z, rng);
        Ok(Self {
            x,
            y,
            z,
            x_ref,
            y_ref,
            z_ref,
        })
    }

    /// `(P samples, reference samples)` for each of the four divergences in
    /// the order `xyz`, `y`, `xy`, `yz`.
    fn pairs(&self) -> Result<[(Tensor, Tensor); 4]> {
        Ok([
            (
                Tensor::hstack(&[&self.x, &self.y, &self.z])?,
                Tensor::hstack(&[&self.x_ref, &self.y_ref, &self.z_ref])?,
            ),
            (self.y.clone(), self.y_ref.clone()),
            (Tensor::hstack(&[&self.x, &self.y])?, Tensor::hstack(&[&self.x_ref, &self.y_ref])?),
            (Tensor::hstack(&[&self.y, &self.z])?, Tensor::hstack(&[&self.y_ref, &self.z_ref])?),
        ])
    }
}

/// A single-output critic trained on the Donsker-Varadhan bound of
/// `D(P‖Q)` from samples of both measures.
#[derive(Clone)]
pub struct DvCritic {
    net: Mlp,
    adam: AdamState,
}

impl DvCritic {
    pub fn new(input: usize, hidden: &[usize], act: Activation, adam: AdamConfig, rng: &mut RngStream) -> Result<Self> {
        let net = Mlp::new(input, hidden, 1, act, Activation::Identity, rng)?;
        let adam = AdamState::new(adam, net.param_names("critic.dv"), &net.param_sizes());
        Ok(Self { net, adam })
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    /// One ascent step on `E_P T − ln E_Q e^T`; returns the batch value.
    pub fn train_step(&mut self, p: &Tensor, q: &Tensor) -> Result<f64> {
        let mut tape = Tape::new();
        let bound = self.net.bind(&mut tape, true);
        let pv = tape.constant(p.clone());
        let qv = tape.constant(q.clone());
        let tp = self.net.forward(&mut tape, &bound, pv)?;
        let tq = self.net.forward(&mut tape, &bound, qv)?;
        let mp = tape.mean(tp);
        let cq = tape.clamp(tq, -EXP_CLAMP, EXP_CLAMP);
        let eq = tape.exp(cq);
        let meq = tape.mean(eq);
        let lq = tape.ln(meq);
        let value = tape.sub(mp, lq)?;
        let loss = tape.neg(value);
        let v = tape.value(value).item();
        if !v.is_finite() {
            return Err(Error::NonFiniteLoss(self.adam.step_count() as usize + 1));
        }
        tape.backward(loss)?;
        let grads = self.net.grads(&tape, &bound);
        let mut params = self.net.params_mut();
        self.adam.update(&mut params, &grads)?;
        Ok(v)
    }
}

fn dv_on(net: &Mlp, p: &Tensor, q: &Tensor) -> Result<f64> {
    let tp = net.eval(p)?;
    let tq = net.eval(q)?;
    Ok(dv_value(Measure::empirical(tp.data())?, Measure::empirical(tq.data())?))
}

/// Critics of the four divergences, in the order `xyz`, `y`, `xy`, `yz`.
pub struct CmiCritics<'a> {
    pub xyz: &'a Mlp,
    pub y: &'a Mlp,
    pub xy: &'a Mlp,
    pub yz: &'a Mlp,
}

/// Entropy-decomposition estimate of `I(X; Z | Y)` on a batch.
pub fn cmi_entropy_based(batch: &CmiBatch, critics: &CmiCritics<'_>) -> Result<f64> {
    let [a, b, c, d] = batch.pairs()?;
    Ok(cmi_from_divergences(
        dv_on(critics.xyz, &a.0, &a.1)?,
        dv_on(critics.y, &b.0, &b.1)?,
        dv_on(critics.xy, &c.0, &c.1)?,
        dv_on(critics.yz, &d.0, &d.1)?,
    ))
}

/// Trains the four divergence critics on minibatches of the given samples
/// (fresh references every step) and evaluates on all of them.
pub fn train_cmi_entropy_based(x: &Tensor, y: &Tensor, z: &Tensor, train: &TrainConfig, iters: usize, rng: &mut RngStream) -> Result<f64> {
    let n = x.rows();
    if n < train.batch || y.rows() != n || z.rows() != n {
        return Err(Error::invalid("samples", "need at least `batch` aligned rows"));
    }
    let adam = AdamConfig {
        lr: train.critic_lr,
        ..AdamConfig::default()
    };
    let widths = [x.cols() + y.cols() + z.cols(), y.cols(), x.cols() + y.cols(), y.cols() + z.cols()];
    let mut critics = Vec::with_capacity(4);
    for w in widths {
        critics.push(DvCritic::new(w, &train.critic_hidden, train.hidden_activation, adam, rng)?);
    }
    for _ in 0..iters {
        let idx: Vec<usize> = (0..train.batch).map(|_| rng.below(n)).collect();
        let pick = |t: &Tensor| crate::estimators::gather(t, &idx);
        let batch = CmiBatch::with_gaussian_references(pick(x), pick(y), pick(z), rng)?;
        for (c, (p, q)) in critics.iter_mut().zip(batch.pairs()?) {
            c.train_step(&p, &q)?;
        }
    }
    let full = CmiBatch::with_gaussian_references(x.clone(), y.clone(), z.clone(), rng)?;
    cmi_entropy_based(
        &full,
        &CmiCritics {
            xyz: critics[0].network(),
            y: critics[1].network(),
            xy: critics[2].network(),
            yz: critics[3].network(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn chain_rule_is_exact() {
        let e = MacEstimate::from_parts(2.0 / 3.0, 0.1 + 0.2, 0.7).unwrap();
        assert_eq!(e.i1 + e.i_y2, e.i_sum);
        assert_eq!(e.i2, e.i_sum - e.i_y1);
        assert!(MacEstimate::from_parts(f64::NAN, 0.0, 0.0).is_err());
    }

    /// Entropy of a discrete pmf, nats.
    fn entropy(p: &[f64]) -> f64 {
        p.iter().filter(|&&v| v > 0.0).map(|v| -v * v.ln()).sum()
    }

    #[test]
    fn oracle_cmi_matches_enumeration() {
        // p(x, y, z) over binary triples, index 4x + 2y + z.
        let p = [0.20, 0.05, 0.10, 0.15, 0.05, 0.10, 0.05, 0.30];
        let marg = |keep: &dyn Fn(usize) -> usize, k: usize| {
            let mut m = vec![0.0; k];
            for (i, &v) in p.iter().enumerate() {
                m[keep(i)] += v;
            }
            m
        };
        let py = marg(&|i| (i >> 1) & 1, 2);
        let pxy = marg(&|i| i >> 1, 4);
        let pyz = marg(&|i| i & 3, 4);
        let brute = entropy(&pxy) + entropy(&pyz) - entropy(&p) - entropy(&py);

        // Uniform references; the oracle critic is the log density ratio.
        let dv = |pm: &[f64]| {
            let q = vec![1.0 / pm.len() as f64; pm.len()];
            let t: Vec<f64> = pm.iter().zip(&q).map(|(a, b)| (a / b).ln()).collect();
            dv_value(Measure::weighted(&t, pm).unwrap(), Measure::weighted(&t, &q).unwrap())
        };
        let v = cmi_from_divergences(dv(&p), dv(&py), dv(&pxy), dv(&pyz));
        assert!((v - brute).abs() < 1e-12, "{v} vs {brute}");
    }

    #[test]
    fn constant_conditioner_cancels() {
        // With Y constant and X, Z independent every pair of terms cancels.
        let px = [0.3, 0.7];
        let pz = [0.6, 0.4];
        let pxz: Vec<f64> = px.iter().flat_map(|a| pz.iter().map(move |b| a * b)).collect();
        let dv = |pm: &[f64]| {
            let q = vec![1.0 / pm.len() as f64; pm.len()];
            let t: Vec<f64> = pm.iter().zip(&q).map(|(a, b)| (a / b).ln()).collect();
            dv_value(Measure::weighted(&t, pm).unwrap(), Measure::weighted(&t, &q).unwrap())
        };
        let v = cmi_from_divergences(dv(&pxz), 0.0, dv(&px), dv(&pz));
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn noiseless_binary_sum_entropy() {
        // Antipodal inputs, Y = X1 + X2: oracle critic −ln p(y) on matching
        // pairs and −∞ elsewhere gives H(Y).
        let inputs = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)];
        let py = |y: f64| -> f64 { if y == 0.0 { 0.5 } else { 0.25 } };
        let mut tp = Vec::new();
        let mut wp = Vec::new();
        let mut tq = Vec::new();
        let mut wq = Vec::new();
        for &(a, b) in &inputs {
            tp.push(-py(a + b).ln());
            wp.push(0.25);
            for y in [-2.0, 0.0, 2.0] {
                let matched = a + b == y;
                tq.push(if matched { -py(y).ln() } else { f64::NEG_INFINITY });
                wq.push(0.25 * py(y));
            }
        }
        let v = dv_value(Measure::weighted(&tp, &wp).unwrap(), Measure::weighted(&tq, &wq).unwrap());
        assert!((v - 1.5 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mac_phases_and_independence() {
        let channel = ChannelSpec::awgn_mac(2.0, 3.0).unwrap();
        let train = TrainConfig {
            batch: 32,
            critic_hidden: vec![8],
            ndt_hidden: vec![8],
            ..TrainConfig::default()
        };
        let mut model = MacModel::new(&channel, &EstimatorConfig::default(), &train, &mut RngStream::new(1)).unwrap();
        let source = SourceSpec::gaussian(1);
        let mut rng = RngStream::new(2);
        let theta = (model.ndt1.snapshot(), model.ndt2.snapshot());
        model.critic_step(&channel, &source, 32, &mut rng).unwrap();
        assert_eq!((model.ndt1.snapshot(), model.ndt2.snapshot()), theta);
        let phi = model.sum.snapshot();
        model.generator_step(&channel, &source, 32, &mut rng).unwrap();
        assert_eq!(model.sum.snapshot(), phi);
        assert_ne!(model.ndt1.snapshot(), theta.0);
        assert_ne!(model.ndt2.snapshot(), theta.1);

        let (x1, x2) = model.sample_inputs(&source, 100_000, &mut rng).unwrap();
        let (a, b) = (x1.data(), x2.data());
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov = a.iter().zip(b).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>() / n;
        let va = a.iter().map(|u| (u - ma).powi(2)).sum::<f64>() / n;
        let vb = b.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / n;
        assert!((cov / (va * vb).sqrt()).abs() < 0.01);
    }
}
