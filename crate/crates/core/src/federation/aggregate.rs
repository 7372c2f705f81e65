use crate::error::{Error, Result};
use crate::nn::ModelWeights;

/// Parameter-wise mean of client weights, each weighted by its share
/// `N_i / Σ N_j` of the training data. Accumulates in `f64` in list order.
pub fn aggregate_weights(contributions: &[(&ModelWeights, usize)]) -> Result<ModelWeights> {
    let Some(&(first, _)) = contributions.first() else {
        return Err(Error::InvalidArgument("no client weights to aggregate".into()));
    };
    for (device, &(w, n)) in contributions.iter().enumerate() {
        if n == 0 {
            return Err(Error::Client {
                device,
                source: Box::new(Error::InvalidArgument("contribution with zero samples".into())),
            });
        }
        first.ensure_congruent(w).map_err(|e| Error::Client {
            device,
            source: Box::new(e),
        })?;
    }

    let total: usize = contributions.iter().map(|&(_, n)| n).sum();
    let shares: Vec<f64> = contributions.iter().map(|&(_, n)| n as f64 / total as f64).collect();
    let mut out = first.clone();
    for (ti, tensor) in out.tensors_mut().iter_mut().enumerate() {
        for (i, v) in tensor.data.iter_mut().enumerate() {
            let acc: f64 = contributions
                .iter()
                .zip(&shares)
                .map(|(&(w, _), &s)| s * w.tensors()[ti].data[i] as f64)
                .sum();
            *v = acc as f32;
        }
    }
    Ok(out)
}
