use super::contrastive::{global_contrastive_loss, moon_loss};
use super::ContrastiveContext;
use crate::error::{Error, Result};
use crate::federation::RepBank;
use crate::nn::{cross_entropy, Scalar};

/// `l_class + μ_moon·l_moon + μ_glob·l_glob`.
pub fn total_loss(l_class: f64, l_moon: f64, l_glob: f64, ctx: &ContrastiveContext) -> f64 {
    l_class + ctx.mu_moon * l_moon + ctx.mu_glob * l_glob
}

/// Projections of the current batch under the frozen global and previous models.
#[derive(Debug, Clone, Copy)]
pub struct MoonTargets<'a, T> {
    pub z_glob: &'a [T],
    pub z_prev: &'a [T],
}

/// Loss components for one batch and the upstream gradients to feed
/// [`Network::backward`](crate::nn::Network::backward).
#[derive(Debug, Clone)]
pub struct BatchObjective<T> {
    pub l_class: f64,
    pub l_moon: f64,
    pub l_glob: f64,
    pub total: f64,
    pub d_logits: Vec<T>,
    pub d_z: Option<Vec<T>>,
    /// Samples whose class had no prototype in the bank.
    pub glob_skipped: usize,
}

/// Cross-entropy plus the weighted contrastive terms, each averaged over the batch.
///
/// The MOON term is evaluated only when `μ_moon > 0` and targets are given;
/// the class-wise term only when `μ_glob > 0` and the bank is non-empty.
/// Samples whose class is absent from the bank contribute zero to `l_glob`
/// but still count in the batch mean.
#[allow(clippy::too_many_arguments)]
pub fn batch_objective<T: Scalar>(
    logits: &[T],
    z: &[T],
    labels: &[usize],
    num_classes: usize,
    moon: Option<MoonTargets<'_, T>>,
    bank: Option<&RepBank>,
    ctx: &ContrastiveContext,
) -> Result<BatchObjective<T>> {
    let (l_class, d_logits) = cross_entropy(logits, labels, num_classes)?;
    let batch = labels.len();
    if !z.len().is_multiple_of(batch) {
        return Err(Error::Shape {
            context: "batch projections",
            expected: format!("multiple of {batch}"),
            got: z.len().to_string(),
        });
    }
    let dim = z.len() / batch;
    let to_f64 = |s: &[T]| s.iter().map(|v| v.as_f64()).collect::<Vec<_>>();

    let use_moon = ctx.mu_moon > 0.0 && moon.is_some();
    let use_glob = ctx.mu_glob > 0.0 && bank.is_some_and(|b| !b.is_empty());
    let mut d_z = (use_moon || use_glob).then(|| vec![0.0f64; z.len()]);
    let inv_batch = 1.0 / batch as f64;

    let mut l_moon = 0.0;
    if let (true, Some(t), Some(dz)) = (use_moon, moon, d_z.as_mut()) {
        if t.z_glob.len() != z.len() || t.z_prev.len() != z.len() {
            return Err(Error::Shape {
                context: "moon targets",
                expected: z.len().to_string(),
                got: format!("{} / {}", t.z_glob.len(), t.z_prev.len()),
            });
        }
        for i in 0..batch {
            let r = i * dim..(i + 1) * dim;
            let lg = moon_loss(&to_f64(&z[r.clone()]), &to_f64(&t.z_glob[r.clone()]), &to_f64(&t.z_prev[r.clone()]), ctx.tau)?;
            l_moon += lg.value;
            for (o, g) in dz[r].iter_mut().zip(&lg.grad) {
                *o += ctx.mu_moon * inv_batch * g;
            }
        }
        l_moon *= inv_batch;
    }

    let mut l_glob = 0.0;
    let mut glob_skipped = 0;
    if let (true, Some(bank), Some(dz)) = (use_glob, bank, d_z.as_mut()) {
        for (i, &label) in labels.iter().enumerate() {
            let r = i * dim..(i + 1) * dim;
            match global_contrastive_loss(&to_f64(&z[r.clone()]), label, bank, ctx.tau)? {
                Some(lg) => {
                    l_glob += lg.value;
                    for (o, g) in dz[r].iter_mut().zip(&lg.grad) {
                        *o += ctx.mu_glob * inv_batch * g;
                    }
                }
                None => glob_skipped += 1,
            }
        }
        l_glob *= inv_batch;
    }

    Ok(BatchObjective {
        l_class,
        l_moon,
        l_glob,
        total: total_loss(l_class, l_moon, l_glob, ctx),
        d_logits,
        d_z: d_z.map(|v| v.into_iter().map(T::of).collect()),
        glob_skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(mu_moon: f64, mu_glob: f64) -> ContrastiveContext {
        ContrastiveContext::new(0.5, mu_moon, mu_glob).unwrap()
    }

    #[test]
    fn total_loss_reductions() {
        assert_eq!(total_loss(1.3, 0.7, 0.4, &ctx(0.0, 0.0)), 1.3);
        assert_eq!(total_loss(1.3, 0.7, 0.4, &ctx(5.0, 0.0)), 1.3 + 5.0 * 0.7);
        assert!((total_loss(1.0, 0.2, 0.3, &ctx(5.0, 1.0)) - 2.3).abs() < 1e-12);
    }

    #[test]
    fn plain_cross_entropy_when_weights_are_zero() {
        let logits = [0.1f32, 0.4, -0.2, 0.3];
        let z = [1.0f32, 0.0, 0.0, 1.0];
        let t = MoonTargets { z_glob: &z[..], z_prev: &z[..] };
        let o = batch_objective(&logits, &z, &[0, 1], 2, Some(t), None, &ctx(0.0, 0.0)).unwrap();
        let (ce, grad) = cross_entropy(&logits, &[0, 1], 2).unwrap();
        assert_eq!(o.total, ce);
        assert_eq!(o.d_logits, grad);
        assert!(o.d_z.is_none());
        assert_eq!(o.l_moon, 0.0);
    }

    #[test]
    fn missing_classes_are_tallied() {
        let mut bank = RepBank::new(2, 0);
        bank.insert(0, crate::federation::ClassRep::new(vec![1.0, 0.0], 10, vec![1])).unwrap();
        let logits = [0.0f64; 4];
        let z = [0.5, 0.5, -0.5, 0.5];
        let o = batch_objective(&logits, &z, &[0, 1], 2, None, Some(&bank), &ctx(0.0, 1.0)).unwrap();
        assert_eq!(o.glob_skipped, 1);
        // single-class bank: the evaluated sample contributes exactly 0
        assert!(o.l_glob.abs() < 1e-12);
    }
}
