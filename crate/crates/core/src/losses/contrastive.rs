use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{Error, Result};
use crate::federation::RepBank;

const NORM_FLOOR: f64 = 1e-12;

static ZERO_NORM_SEEN: AtomicBool = AtomicBool::new(false);

/// A loss value with its gradient w.r.t. `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn floored(n: f64) -> f64 {
    if n < NORM_FLOOR {
        if !ZERO_NORM_SEEN.swap(true, Ordering::Relaxed) {
            log::warn!("zero-norm vector in cosine similarity; similarity treated as 0");
        }
        NORM_FLOOR
    } else {
        n
    }
}

/// `a·b / (‖a‖‖b‖)` with each norm floored at 1e-12.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine_sim dimension mismatch");
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (floored(norm(a)) * floored(norm(b)))
}

/// Cosine similarity and its gradient w.r.t. `a`, scaled by `scale`.
fn cosine_grad(a: &[f64], b: &[f64], scale: f64) -> (f64, Vec<f64>) {
    let raw_a = norm(a);
    let na = floored(raw_a);
    let nb = floored(norm(b));
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let sim = dot / (na * nb);
    let radial = if raw_a >= NORM_FLOOR { sim / (na * na) } else { 0.0 };
    let grad = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| scale * (y / (na * nb) - radial * x))
        .collect();
    (sim, grad)
}

fn check_dims(context: &'static str, z: &[f64], other: &[f64]) -> Result<()> {
    if z.len() != other.len() {
        return Err(Error::Shape {
            context,
            expected: z.len().to_string(),
            got: other.len().to_string(),
        });
    }
    Ok(())
}

/// Softmax cross-entropy over `logits` with the positive at index 0,
/// combined with per-logit gradients into a gradient w.r.t. `z`.
fn softmax_nll(logits: &[f64], grads: &[Vec<f64>], positive: usize) -> LossGrad {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let value = total.ln() - (logits[positive] - max);
    let dim = grads[0].len();
    let mut grad = vec![0.0; dim];
    for (k, (e, g)) in exps.iter().zip(grads).enumerate() {
        let coeff = e / total - if k == positive { 1.0 } else { 0.0 };
        for (o, v) in grad.iter_mut().zip(g) {
            *o += coeff * v;
        }
    }
    LossGrad { value, grad }
}

/// `−log( e^{sim(z,z_glob)/τ} / (e^{sim(z,z_glob)/τ} + e^{sim(z,z_prev)/τ}) )`.
pub fn moon_loss(z: &[f64], z_glob: &[f64], z_prev: &[f64], tau: f64) -> Result<LossGrad> {
    if !(tau > 0.0) {
        return Err(Error::Temperature(tau));
    }
    check_dims("moon global projection", z, z_glob)?;
    check_dims("moon previous projection", z, z_prev)?;
    let (s_glob, g_glob) = cosine_grad(z, z_glob, 1.0 / tau);
    let (s_prev, g_prev) = cosine_grad(z, z_prev, 1.0 / tau);
    Ok(softmax_nll(&[s_glob / tau, s_prev / tau], &[g_glob, g_prev], 0))
}

/// `−log( e^{sim(z,zs^y)/τ} / Σ_k e^{sim(z,zs^k)/τ} )` over the classes in `bank`.
///
/// Returns `None` when the sample's class has no prototype in the bank.
pub fn global_contrastive_loss(z: &[f64], label: usize, bank: &RepBank, tau: f64) -> Result<Option<LossGrad>> {
    if !(tau > 0.0) {
        return Err(Error::Temperature(tau));
    }
    if bank.get(label).is_none() {
        return Ok(None);
    }
    if bank.dim() != z.len() {
        return Err(Error::Shape {
            context: "bank prototype",
            expected: z.len().to_string(),
            got: bank.dim().to_string(),
        });
    }
    let mut logits = Vec::with_capacity(bank.len());
    let mut grads = Vec::with_capacity(bank.len());
    let mut positive = 0;
    for (class, rep) in bank.iter() {
        if class == label {
            positive = logits.len();
        }
        let proto: Vec<f64> = rep.vector.iter().map(|&v| v as f64).collect();
        let (s, g) = cosine_grad(z, &proto, 1.0 / tau);
        logits.push(s / tau);
        grads.push(g);
    }
    Ok(Some(softmax_nll(&logits, &grads, positive)))
}
