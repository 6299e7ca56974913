//! Exact per-batch orderings between the variational estimators.

use capbench_core::estimators::{
    dv_mine, dv_value, infonce, infonce_value, nwj_dv_variant, nwj_value, smile, smile_value, tuba_value, JointBatch,
    Measure,
};
use capbench_core::numerics::{Activation, Mlp, RngStream, Tensor};

/// `nwj ≤ dv`, `tuba(α) ≤ dv` and `smile(τ = 10⁶) == dv` bit for bit, on
/// empirical critic values.
pub fn formula_values(tp: &[f64], tq: &[f64], alpha: f64) -> Result<(), String> {
    let p = Measure::empirical(tp).map_err(|e| e.to_string())?;
    let q = Measure::empirical(tq).map_err(|e| e.to_string())?;
    let dv = dv_value(p, q);
    let nwj = nwj_value(p, q);
    if nwj > dv {
        return Err(format!("nwj {nwj} > dv {dv}"));
    }
    let tuba = tuba_value(p, q, alpha).map_err(|e| e.to_string())?;
    if tuba > dv + 1e-12 {
        return Err(format!("tuba({alpha}) {tuba} > dv {dv}"));
    }
    let sm = smile_value(p, q, 1e6).map_err(|e| e.to_string())?;
    if sm.to_bits() != dv.to_bits() {
        return Err(format!("smile(1e6) {sm} != dv {dv}"));
    }
    Ok(())
}

/// `infonce ≤ ln k` for a `k × k` score matrix.
pub fn infonce_scores(k: usize, scores: &[f64]) -> Result<(), String> {
    let s = Tensor::new(k, k, scores[..k * k].to_vec()).map_err(|e| e.to_string())?;
    let v = infonce_value(&s).map_err(|e| e.to_string())?;
    if v > (k as f64).ln() {
        return Err(format!("infonce {v} > ln {k}"));
    }
    Ok(())
}

fn batch_and_critic(seed: u64, n: usize, dx: usize, scale: f64) -> (JointBatch, Mlp) {
    let mut rng = RngStream::new(seed);
    let x: Vec<f64> = (0..n * dx).map(|_| rng.normal()).collect();
    let y: Vec<f64> = (0..n).map(|i| x[i * dx] + 0.5 * rng.normal()).collect();
    let mut critic = Mlp::new(dx + 1, &[8, 8], 1, Activation::Tanh, Activation::Identity, &mut rng).unwrap();
    for p in critic.params_mut() {
        p.iter_mut().for_each(|w| *w *= scale);
    }
    let batch = JointBatch::new(Tensor::new(n, dx, x).unwrap(), Tensor::column(y)).unwrap();
    (batch, critic)
}

/// The same orderings for a random network critic on a random batch.
pub fn network(seed: u64, n: usize, dx: usize, scale: f64) -> Result<(), String> {
    let (batch, critic) = batch_and_critic(seed, n, dx, scale);
    let err = |e: capbench_core::Error| e.to_string();
    let dv = dv_mine(&batch, &critic).map_err(err)?.value;
    let nwj = nwj_dv_variant(&batch, &critic).map_err(err)?.value;
    if nwj > dv {
        return Err(format!("network nwj {nwj} > dv {dv}"));
    }
    let sm = smile(&batch, &critic, 1e6).map_err(err)?.value;
    if sm.to_bits() != dv.to_bits() {
        return Err(format!("network smile(1e6) {sm} != dv {dv}"));
    }
    let k = n.min(8);
    let nce = infonce(&batch, &critic, k).map_err(err)?.value;
    if nce > (k as f64).ln() {
        return Err(format!("network infonce {nce} > ln {k}"));
    }
    Ok(())
}
