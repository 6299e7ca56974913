//! Central finite-difference checks of the reverse-mode gradients used in
//! training. Each check returns the first mismatching coordinate.

use capbench_core::channels::{gaussian_noise, ConstraintSpec};
use capbench_core::estimators::{CriticSet, EstimatorConfig, EstimatorKind, Terms};
use capbench_core::ndt::NdtNet;
use capbench_core::numerics::{Activation, AdamConfig, Mlp, RngStream, Tape, Tensor, Var};

const STEP: f64 = 1e-5;
const REL: f64 = 1e-4;
/// Gradients smaller than this are compared on an absolute scale of `REL * FLOOR`.
const FLOOR: f64 = 1e-3;

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= REL * analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Compares `analytic` with central differences of `f` over every coordinate
/// of `params`.
fn check_flat(params: &mut [f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Result<(), String> {
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + STEP;
        let up = f(params);
        params[i] = orig - STEP;
        let down = f(params);
        params[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        if !close(analytic[i], numeric) {
            return Err(format!("coordinate {i}: analytic {} vs numeric {numeric}", analytic[i]));
        }
    }
    Ok(())
}

fn random(rng: &mut RngStream, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| scale * rng.normal()).collect()).unwrap()
}

/// A scalar loss exercising every tape operation. `leaves` are
/// `a: [n, k]`, `b: [k, n]`, `c: [1, n]`.
fn op_graph(tape: &mut Tape, leaves: &[Var]) -> Var {
    let (a, b, c) = (leaves[0], leaves[1], leaves[2]);
    let ab = tape.matmul(a, b).unwrap();
    let ab = tape.add_row(ab, c).unwrap();
    let t = tape.activation(ab, Activation::Tanh);
    let s = tape.activation(ab, Activation::Sigmoid);
    let sp = tape.activation(ab, Activation::Softplus);
    let m = tape.mul(t, s).unwrap();
    let sq = tape.square(sp);
    let sq = tape.offset(sq, 1.0);
    let r = tape.sqrt(sq);
    let l = tape.ln(r);
    let e = tape.scale(m, 0.3);
    let e = tape.exp(e);
    let inv = tape.recip(e);
    let mix = tape.sub(l, inv).unwrap();
    let mix = tape.add(mix, m).unwrap();
    let n = tape.value(mix).rows();
    let tr = tape.transpose(mix);
    let both = tape.concat_cols(&[mix, tr]).unwrap();
    let idx: Vec<usize> = (0..n).rev().chain(0..n).collect();
    let g = tape.gather_rows(both, &idx).unwrap();
    let cols = tape.value(g).cols();
    let flat = tape.reshape(g, cols, 2 * n).unwrap();
    let lme = tape.log_mean_exp_rows(flat);
    let w = tape.mean(lme);
    let wide = tape.clamp(flat, -1e6, 1e6);
    let ws = tape.mul_scalar(wide, w).unwrap();
    let total = tape.sum(ws);
    let k = tape.neg(total);
    tape.mean(k)
}

pub fn ndt_constraint(kind: u8) -> ConstraintSpec {
    match kind {
        0 => ConstraintSpec::average_power(2.0).unwrap(),
        1 => ConstraintSpec::new(Some(1.5), Some(1.2), false, None).unwrap(),
        _ => ConstraintSpec::new(None, Some(3.0), true, Some(0.6)).unwrap(),
    }
}

/// Every tape operation, `n`, `k` >= 1.
pub fn tape_ops(seed: u64, n: usize, k: usize) -> Result<(), String> {
    let mut rng = RngStream::new(seed);
    let inputs = [random(&mut rng, n, k, 0.7), random(&mut rng, k, n, 0.7), random(&mut rng, 1, n, 0.7)];
    let mut tape = Tape::new();
    let leaves: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = op_graph(&mut tape, &leaves);
    tape.backward(loss).map_err(|e| e.to_string())?;
    for (j, input) in inputs.iter().enumerate() {
        let analytic = tape.grad(leaves[j]).unwrap().to_vec();
        let mut flat = input.data().to_vec();
        let eval = |p: &[f64]| {
            let mut t = Tape::new();
            let vs: Vec<Var> = inputs
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let v = if i == j { Tensor::new(x.rows(), x.cols(), p.to_vec()).unwrap() } else { x.clone() };
                    t.constant(v)
                })
                .collect();
            let l = op_graph(&mut t, &vs);
            t.value(l).item()
        };
        check_flat(&mut flat, &analytic, eval).map_err(|e| format!("leaf {j}: {e}"))?;
    }
    Ok(())
}

/// Critic-loss gradients of `EstimatorKind::ALL[kind]` on a batch of `n` pairs.
pub fn estimator_loss(seed: u64, kind: usize, n: usize) -> Result<(), String> {
    let kind = EstimatorKind::ALL[kind];
    let mut rng = RngStream::new(seed);
    let x = random(&mut rng, n, 1, 1.0);
    let y = Tensor::new(n, 1, x.data().iter().map(|v| v + 0.5 * rng.normal()).collect()).unwrap();
    let set = CriticSet::new(EstimatorConfig::new(kind), 1, 1, &[5, 5], Activation::Tanh, AdamConfig::default(), &mut rng).unwrap();
    let draw = RngStream::new(seed ^ 0x5eed);

    // The MINE surrogate's gradient is the gradient of the DV value itself
    // on the first step, so its loss is checked against `-value`.
    let loss_of = |set: &CriticSet| -> (f64, Tape, Terms) {
        let mut s = set.clone();
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let yv = t.constant(y.clone());
        let terms = s.build(&mut t, xv, yv, true, &mut draw.clone()).unwrap();
        let v = if kind == EstimatorKind::Mine { -t.value(terms.value).item() } else { t.value(terms.critic_loss).item() };
        (v, t, terms)
    };
    let (_, mut tape, terms) = loss_of(&set);
    tape.backward(terms.critic_loss).map_err(|e| e.to_string())?;
    let grads = set.gradients(&tape, &terms);
    for (net, net_grads) in grads.iter().enumerate() {
        for (p, g) in net_grads.iter().enumerate() {
            let mut flat = set.networks()[net].params()[p].to_vec();
            let eval = |vals: &[f64]| {
                let mut s = set.clone();
                s.networks_mut()[net].params_mut()[p].copy_from_slice(vals);
                loss_of(&s).0
            };
            check_flat(&mut flat, g, eval).map_err(|e| format!("{kind:?} network {net} tensor {p}: {e}"))?;
        }
    }
    Ok(())
}

/// DINE and the chi-square bound draw reference samples from the batch
/// moments and hold them constant on the tape, so their pathwise objective
/// is not the function a finite difference sees. The first five kinds are
/// the reparameterized objectives checked end to end.
pub const PIPELINE_KINDS: usize = 5;

/// Generator gradients through the transformer, the constraint projection,
/// additive noise and the critic objective.
pub fn ndt_pipeline(seed: u64, constraint: u8, kind: usize, n: usize) -> Result<(), String> {
    let kind = EstimatorKind::ALL[kind];
    let mut rng = RngStream::new(seed);
    let c = ndt_constraint(constraint);
    let ndt = NdtNet::new(c, 1, &[5, 5], Activation::Tanh, AdamConfig::default(), &mut rng).unwrap();
    let critics = CriticSet::new(EstimatorConfig::new(kind), 1, 1, &[5, 5], Activation::Tanh, AdamConfig::default(), &mut rng).unwrap();
    let s = random(&mut rng, n, 1, 1.0);
    let z = gaussian_noise(n, 1, 0.7, &mut rng).unwrap();
    let draw = RngStream::new(seed ^ 0xabc);

    let objective = |ndt: &NdtNet, tape: &mut Tape| {
        let sv = tape.constant(s.clone());
        let (x, bound) = ndt.forward_on_tape(tape, sv, true).unwrap();
        let zv = tape.constant(z.clone());
        let y = tape.add(x, zv).unwrap();
        let terms = critics.clone().build(tape, x, y, false, &mut draw.clone()).unwrap();
        (terms.objective, bound)
    };
    let mut tape = Tape::new();
    let (obj, bound) = objective(&ndt, &mut tape);
    tape.backward(obj).map_err(|e| e.to_string())?;
    let grads = ndt.network().grads(&tape, &bound);
    for (p, g) in grads.iter().enumerate() {
        let mut flat = ndt.network().params()[p].to_vec();
        let eval = |vals: &[f64]| {
            let mut m = ndt.clone();
            m.network_mut().params_mut()[p].copy_from_slice(vals);
            let mut t = Tape::new();
            let (o, _) = objective(&m, &mut t);
            t.value(o).item()
        };
        check_flat(&mut flat, g, eval).map_err(|e| format!("{kind:?} constraint {constraint} tensor {p}: {e}"))?;
    }
    Ok(())
}

/// A ReLU network at a random input, where kinks are hit with probability zero.
pub fn relu_network(seed: u64) -> Result<(), String> {
    let mut rng = RngStream::new(seed);
    let net = Mlp::new(2, &[4], 1, Activation::Relu, Activation::Identity, &mut rng).unwrap();
    let x = random(&mut rng, 6, 2, 1.0);
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let b = net.bind(&mut tape, true);
    let out = net.forward(&mut tape, &b, xv).unwrap();
    let loss = tape.mean(out);
    tape.backward(loss).map_err(|e| e.to_string())?;
    let grads = net.grads(&tape, &b);
    for (p, g) in grads.iter().enumerate() {
        let mut flat = net.params()[p].to_vec();
        let eval = |vals: &[f64]| {
            let mut m = net.clone();
            m.params_mut()[p].copy_from_slice(vals);
            m.eval(&x).unwrap().mean()
        };
        check_flat(&mut flat, g, eval).map_err(|e| format!("tensor {p}: {e}"))?;
    }
    Ok(())
}
