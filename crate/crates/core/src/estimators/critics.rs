use alloc::vec;
use alloc::vec::Vec;

use super::formulas::{count_clamped, Chi2Form, EXP_CLAMP};
use super::{
    chi2_bound_mi, dine_memoryless, dv_mine, gaussian_reference, infonce, nwj_dv_variant, smile, tuba,
    EstimatorConfig, EstimatorKind, JointBatch, MiEstimate,
};
use crate::error::{Error, Result};
use crate::math;
use crate::numerics::{Activation, AdamConfig, AdamState, BoundMlp, Mlp, RngStream, Tape, Tensor, Var};

/// Floor applied before taking logarithms of density-ratio critics.
const RATIO_FLOOR: f64 = 1e-6;

#[derive(Clone)]
struct Critic {
    net: Mlp,
    adam: AdamState,
}

impl Critic {
    fn new(name: &str, input: usize, output: usize, hidden: &[usize], act: Activation, adam: AdamConfig, rng: &mut RngStream) -> Result<Self> {
        let net = Mlp::new(input, hidden, output, act, Activation::Identity, rng)?;
        let adam = AdamState::new(adam, net.param_names(name), &net.param_sizes());
        Ok(Self { net, adam })
    }
}

/// Tape handles produced by [`CriticSet::build`].
pub struct Terms {
    /// The estimator value on this batch.
    pub value: Var,
    /// Minimized by the critic update.
    pub critic_loss: Var,
    /// Maximized by the input-distribution update.
    pub objective: Var,
    /// Per-sample information density `[n, 1]` implied by the critics.
    pub density: Var,
    bound: Vec<BoundMlp>,
}

/// The critics of one estimator together with their optimizer state.
///
/// Critics are single-owner; every trial builds its own set.
#[derive(Clone)]
pub struct CriticSet {
    config: EstimatorConfig,
    dx: usize,
    dy: usize,
    joint: Critic,
    aux: Vec<Critic>,
    ema: Option<f64>,
    clamped: usize,
    eval_block: usize,
    scale: (f64, f64),
}

impl CriticSet {
    /// Builds the critics required by `config.kind` for inputs of width `dx`
    /// and outputs of width `dy`.
    pub fn new(
        config: EstimatorConfig,
        dx: usize,
        dy: usize,
        hidden: &[usize],
        hidden_act: Activation,
        adam: AdamConfig,
        rng: &mut RngStream,
    ) -> Result<Self> {
        config.validate()?;
        let joint = Critic::new("critic.joint", dx + dy, 1, hidden, hidden_act, adam, rng)?;
        let aux = match config.kind {
            EstimatorKind::Dine => vec![Critic::new("critic.marginal", dy, 1, hidden, hidden_act, adam, rng)?],
            EstimatorKind::Chi2 => vec![
                Critic::new("critic.chi_x", dx, 2, hidden, hidden_act, adam, rng)?,
                Critic::new("critic.chi_y", dy, 2, hidden, hidden_act, adam, rng)?,
            ],
            _ => Vec::new(),
        };
        Ok(Self {
            config,
            dx,
            dy,
            joint,
            aux,
            ema: None,
            clamped: 0,
            eval_block: 256,
            scale: (1.0, 1.0),
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.dx, self.dy)
    }

    /// Running count of clamped critic outputs seen during training.
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    /// Block size used by contrastive evaluation.
    pub fn set_eval_block(&mut self, k: usize) {
        self.eval_block = k.max(2);
    }

    /// Divides inputs by `sx` and outputs by `sy` before they reach any
    /// critic. Mutual information is unchanged by the rescaling.
    pub fn set_input_scale(&mut self, sx: f64, sy: f64) -> Result<()> {
        if !(sx > 0.0 && sx.is_finite() && sy > 0.0 && sy.is_finite()) {
            return Err(Error::invalid("scale", "input scales must be finite and > 0"));
        }
        self.scale = (sx, sy);
        Ok(())
    }

    pub fn input_scale(&self) -> (f64, f64) {
        self.scale
    }

    pub fn networks(&self) -> Vec<&Mlp> {
        core::iter::once(&self.joint.net).chain(self.aux.iter().map(|c| &c.net)).collect()
    }

    pub fn networks_mut(&mut self) -> Vec<&mut Mlp> {
        core::iter::once(&mut self.joint.net)
            .chain(self.aux.iter_mut().map(|c| &mut c.net))
            .collect()
    }

    /// Flattened copy of every critic parameter.
    pub fn snapshot(&self) -> Vec<f64> {
        self.networks()
            .into_iter()
            .flat_map(|n| n.params().into_iter().flat_map(|p| p.iter().copied()).collect::<Vec<_>>())
            .collect()
    }

    /// Records the estimator on `tape` for samples `x: [n, dx]`, `y: [n, dy]`.
    /// Critic parameters are trainable leaves when `trainable` is set and
    /// constants otherwise. Marginal pairings and reference samples are drawn
    /// from `rng`.
    pub fn build(&mut self, tape: &mut Tape, x: Var, y: Var, trainable: bool, rng: &mut RngStream) -> Result<Terms> {
        let x = if self.scale.0 == 1.0 { x } else { tape.scale(x, 1.0 / self.scale.0) };
        let y = if self.scale.1 == 1.0 { y } else { tape.scale(y, 1.0 / self.scale.1) };
        let n = tape.value(x).rows();
        if n < 2 || tape.value(y).rows() != n {
            return Err(Error::invalid("batch", "need at least two paired samples"));
        }
        let kind = self.config.kind;
        let bj = self.joint.net.bind(tape, trainable);
        let pin = tape.concat_cols(&[x, y])?;
        let tp = self.joint.net.forward(tape, &bj, pin)?;
        let mut bound = vec![bj.clone()];

        let terms = match kind {
            EstimatorKind::Mine | EstimatorKind::Smile | EstimatorKind::Nwj | EstimatorKind::Tuba => {
                let perm = rng.derangement(n);
                let yq = tape.gather_rows(y, &perm)?;
                let qin = tape.concat_cols(&[x, yq])?;
                let tq = self.joint.net.forward(tape, &bj, qin)?;
                self.clamped += count_clamped(tape.value(tq).data());
                let a = tape.mean(tp);
                let c = tape.clamp(tq, -EXP_CLAMP, EXP_CLAMP);
                let e = tape.exp(c);
                let me = tape.mean(e);
                let value = match kind {
                    EstimatorKind::Mine => {
                        let l = tape.ln(me);
                        tape.sub(a, l)?
                    }
                    EstimatorKind::Smile => {
                        let tau = self.config.tau;
                        let clipped = tape.clamp(e, math::exp(-tau), math::exp(tau));
                        let m = tape.mean(clipped);
                        let l = tape.ln(m);
                        tape.sub(a, l)?
                    }
                    EstimatorKind::Nwj => {
                        let r = tape.offset(me, -1.0);
                        tape.sub(a, r)?
                    }
                    _ => {
                        let alpha = self.config.alpha;
                        let r = tape.scale(me, 1.0 / alpha);
                        let r = tape.offset(r, math::ln(alpha) - 1.0);
                        tape.sub(a, r)?
                    }
                };
                let (critic_loss, objective) = match kind {
                    EstimatorKind::Mine => {
                        let batch_mean = tape.value(me).item();
                        let denom = match self.ema {
                            Some(prev) if trainable => {
                                let r = self.config.ema_rate;
                                r * prev + (1.0 - r) * batch_mean
                            }
                            Some(prev) => prev,
                            None => batch_mean,
                        };
                        if trainable {
                            self.ema = Some(denom);
                        }
                        let s = tape.scale(me, 1.0 / denom);
                        let surrogate = tape.sub(a, s)?;
                        (tape.neg(surrogate), value)
                    }
                    EstimatorKind::Smile => {
                        // Critic trained with the Jensen-Shannon objective; the
                        // clipped DV is only used as the estimate.
                        let neg_tp = tape.neg(tp);
                        let sp = tape.activation(neg_tp, Activation::Softplus);
                        let sq = tape.activation(tq, Activation::Softplus);
                        let lp = tape.mean(sp);
                        let lq = tape.mean(sq);
                        let loss = tape.add(lp, lq)?;
                        (loss, tape.neg(loss))
                    }
                    _ => (tape.neg(value), value),
                };
                Terms {
                    value,
                    critic_loss,
                    objective,
                    density: tp,
                    bound: Vec::new(),
                }
            }
            EstimatorKind::InfoNce => {
                let mut xi = Vec::with_capacity(n * n);
                let mut yi = Vec::with_capacity(n * n);
                let mut diag = Vec::with_capacity(n);
                for i in 0..n {
                    for j in 0..n {
                        xi.push(j);
                        yi.push(i);
                    }
                    diag.push(i * n + i);
                }
                let xs = tape.gather_rows(x, &xi)?;
                let ys = tape.gather_rows(y, &yi)?;
                let sin = tape.concat_cols(&[xs, ys])?;
                let s = self.joint.net.forward(tape, &bj, sin)?;
                self.clamped += count_clamped(tape.value(s).data());
                let s = tape.clamp(s, -EXP_CLAMP, EXP_CLAMP);
                let sm = tape.reshape(s, n, n)?;
                let lme = tape.log_mean_exp_rows(sm);
                let d = tape.gather_rows(s, &diag)?;
                let density = tape.sub(d, lme)?;
                let value = tape.mean(density);
                Terms {
                    value,
                    critic_loss: tape.neg(value),
                    objective: value,
                    density,
                    bound: Vec::new(),
                }
            }
            EstimatorKind::Dine => {
                let (yr, _) = gaussian_reference(tape.value(y), rng);
                let yr = tape.constant(yr);
                let qin = tape.concat_cols(&[x, yr])?;
                let tq = self.joint.net.forward(tape, &bj, qin)?;
                let bm = self.aux[0].net.bind(tape, trainable);
                let mp = self.aux[0].net.forward(tape, &bm, y)?;
                let mq = self.aux[0].net.forward(tape, &bm, yr)?;
                self.clamped += count_clamped(tape.value(tq).data()) + count_clamped(tape.value(mq).data());
                bound.push(bm);
                let t1 = dv_on_tape(tape, tp, tq)?;
                let t2 = dv_on_tape(tape, mp, mq)?;
                let value = tape.sub(t1, t2)?;
                let both = tape.add(t1, t2)?;
                let density = tape.sub(tp, mp)?;
                Terms {
                    value,
                    critic_loss: tape.neg(both),
                    objective: value,
                    density,
                    bound: Vec::new(),
                }
            }
            EstimatorKind::Chi2 => {
                let (xr, _) = gaussian_reference(tape.value(x), rng);
                let (yr, _) = gaussian_reference(tape.value(y), rng);
                let xr = tape.constant(xr);
                let yr = tape.constant(yr);
                let qin = tape.concat_cols(&[xr, yr])?;
                let tq = self.joint.net.forward(tape, &bj, qin)?;
                self.clamped += count_clamped(tape.value(tq).data());
                let dv = dv_on_tape(tape, tp, tq)?;
                let form = self.config.chi2_form;
                let mut sup = dv;
                let mut value = dv;
                let mut density = tp;
                for (k, (p, q)) in [(x, xr), (y, yr)].into_iter().enumerate() {
                    let b = self.aux[k].net.bind(tape, trainable);
                    let hp = self.aux[k].net.forward(tape, &b, p)?;
                    let hq = self.aux[k].net.forward(tape, &b, q)?;
                    bound.push(b);
                    let (p0, p1) = (select_col(tape, hp, 0)?, select_col(tape, hp, 1)?);
                    let (q0, q1) = (select_col(tape, hq, 0)?, select_col(tape, hq, 1)?);
                    let fwd = chi2_on_tape(tape, p0, q0, form)?;
                    let rev = chi2_on_tape(tape, q1, p1, form)?;
                    sup = tape.add(sup, fwd)?;
                    sup = tape.add(sup, rev)?;
                    if let Some(up) = chi2_up_on_tape(tape, fwd, rev)? {
                        value = tape.sub(value, up)?;
                    }
                    let r = tape.clamp(p0, RATIO_FLOOR, f64::INFINITY);
                    let lr = tape.ln(r);
                    density = tape.sub(density, lr)?;
                }
                Terms {
                    value,
                    critic_loss: tape.neg(sup),
                    objective: value,
                    density,
                    bound: Vec::new(),
                }
            }
        };
        Ok(Terms { bound, ..terms })
    }

    /// Applies one Adam step to every critic from the gradients on `tape`.
    pub fn apply_gradients(&mut self, tape: &Tape, terms: &Terms) -> Result<()> {
        let critics = core::iter::once(&mut self.joint).chain(self.aux.iter_mut());
        for (c, b) in critics.zip(&terms.bound) {
            let grads = c.net.grads(tape, b);
            let mut params = c.net.params_mut();
            c.adam.update(&mut params, &grads)?;
        }
        Ok(())
    }

    /// Gradients on `tape` for every critic, in the order of
    /// [`networks`](Self::networks), one vector per parameter tensor.
    pub fn gradients(&self, tape: &Tape, terms: &Terms) -> Vec<Vec<Vec<f64>>> {
        self.networks()
            .into_iter()
            .zip(&terms.bound)
            .map(|(net, b)| net.grads(tape, b))
            .collect()
    }

    /// One critic update on a fixed batch. Returns the batch estimate.
    pub fn train_step(&mut self, x: &Tensor, y: &Tensor, rng: &mut RngStream) -> Result<f64> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let yv = tape.constant(y.clone());
        let terms = self.build(&mut tape, xv, yv, true, rng)?;
        let value = tape.value(terms.value).item();
        if !value.is_finite() || !tape.value(terms.critic_loss).item().is_finite() {
            return Ok(f64::NAN);
        }
        tape.backward(terms.critic_loss)?;
        self.apply_gradients(&tape, &terms)?;
        Ok(value)
    }

    /// Evaluation-mode estimate with frozen critics.
    pub fn evaluate(&self, batch: &JointBatch, rng: &mut RngStream) -> Result<MiEstimate> {
        let scaled;
        let batch = if self.scale == (1.0, 1.0) {
            batch
        } else {
            let (sx, sy) = self.scale;
            scaled = JointBatch::new(batch.x.map(|v| v / sx), batch.y.map(|v| v / sy))?;
            &scaled
        };
        let net = &self.joint.net;
        match self.config.kind {
            EstimatorKind::Mine => dv_mine(batch, net),
            EstimatorKind::Smile => smile(batch, net, self.config.tau),
            EstimatorKind::Nwj => nwj_dv_variant(batch, net),
            EstimatorKind::Tuba => tuba(batch, net, self.config.alpha),
            EstimatorKind::InfoNce => infonce(batch, net, self.eval_block),
            EstimatorKind::Dine => dine_memoryless(batch, net, &self.aux[0].net, rng),
            EstimatorKind::Chi2 => chi2_bound_mi(batch, net, &self.aux[0].net, &self.aux[1].net, self.config.chi2_form, rng),
        }
    }
}

fn dv_on_tape(tape: &mut Tape, tp: Var, tq: Var) -> Result<Var> {
    let a = tape.mean(tp);
    let c = tape.clamp(tq, -EXP_CLAMP, EXP_CLAMP);
    let e = tape.exp(c);
    let m = tape.mean(e);
    let l = tape.ln(m);
    tape.sub(a, l)
}

fn select_col(tape: &mut Tape, h: Var, j: usize) -> Result<Var> {
    let w = tape.value(h).cols();
    let mut sel = vec![0.0; w];
    sel[j] = 1.0;
    let s = tape.constant(Tensor::new(w, 1, sel)?);
    tape.matmul(h, s)
}

fn chi2_on_tape(tape: &mut Tape, p: Var, q: Var, form: Chi2Form) -> Result<Var> {
    let a = tape.mean(p);
    let q2 = tape.square(q);
    let b = tape.mean(q2);
    let v = match form {
        Chi2Form::Standard => {
            let a2 = tape.scale(a, 2.0);
            tape.sub(a2, b)?
        }
        Chi2Form::Paper => {
            if !(tape.value(b).item() > 0.0) {
                return Err(Error::invalid("critic", "E_Q[T^2] must be > 0 for the logarithmic form"));
            }
            let l = tape.ln(b);
            tape.sub(a, l)?
        }
    };
    Ok(tape.offset(v, -1.0))
}

/// χ²_UP on tape, `None` when the forward divergence is clamped to zero.
fn chi2_up_on_tape(tape: &mut Tape, fwd: Var, rev: Var) -> Result<Option<Var>> {
    let a = tape.clamp(fwd, 0.0, f64::INFINITY);
    if tape.value(a).item() == 0.0 {
        return Ok(None);
    }
    let b = tape.clamp(rev, 0.0, f64::INFINITY);
    let opa = tape.offset(a, 1.0);
    let l = tape.ln(opa);
    let opa2 = tape.square(opa);
    let opb = tape.offset(b, 1.0);
    let den = tape.mul(opb, opa2)?;
    let den = tape.offset(den, -1.0);
    let inv = tape.recip(den);
    let a2 = tape.square(a);
    let frac = tape.mul(a2, inv)?;
    let frac = tape.scale(frac, 1.5);
    Ok(Some(tape.sub(l, frac)?))
}
