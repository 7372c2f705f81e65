//! Finite-difference gradient oracle.

use super::params::ParamSet;
use super::Scalar;

/// Central differences `(f(w+ε) − f(w−ε)) / 2ε` for every parameter.
pub fn finite_diff_grad<T: Scalar>(
    w: &ParamSet<T>,
    eps: f64,
    mut objective: impl FnMut(&ParamSet<T>) -> f64,
) -> ParamSet<T> {
    let mut probe = w.clone();
    let mut out = w.zeros_like();
    let h = T::of(eps);
    for ti in 0..w.tensors().len() {
        for i in 0..w.tensors()[ti].data.len() {
            let orig = probe.tensors()[ti].data[i];
            probe.tensors_mut()[ti].data[i] = orig + h;
            let up = objective(&probe);
            probe.tensors_mut()[ti].data[i] = orig - h;
            let down = objective(&probe);
            probe.tensors_mut()[ti].data[i] = orig;
            // Divide by the step actually taken, which differs from 2ε in low precision.
            let step = ((orig + h) - (orig - h)).as_f64();
            out.tensors_mut()[ti].data[i] = T::of((up - down) / step);
        }
    }
    out
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, or 0 when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Per-tensor relative errors between analytic and numeric gradients.
pub fn tensor_errors<T: Scalar>(analytic: &ParamSet<T>, numeric: &ParamSet<T>) -> Vec<(String, f64)> {
    analytic
        .tensors()
        .iter()
        .zip(numeric.tensors())
        .map(|(a, n)| {
            let av: Vec<f64> = a.data.iter().map(|v| v.as_f64()).collect();
            let nv: Vec<f64> = n.data.iter().map(|v| v.as_f64()).collect();
            (a.name.clone(), relative_error(&av, &nv))
        })
        .collect()
}
