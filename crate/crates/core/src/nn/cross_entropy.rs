use super::Scalar;
use crate::error::{Error, Result};

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. the logits.
///
/// `logits` is row-major `labels.len() × num_classes`. Rows are evaluated in
/// double precision with the row maximum subtracted.
pub fn cross_entropy<T: Scalar>(logits: &[T], labels: &[usize], num_classes: usize) -> Result<(f64, Vec<T>)> {
    let batch = labels.len();
    if batch == 0 || logits.len() != batch * num_classes {
        return Err(Error::Shape {
            context: "cross-entropy logits",
            expected: format!("{batch} x {num_classes}"),
            got: format!("{} values", logits.len()),
        });
    }
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
        return Err(Error::Label {
            index,
            label,
            classes: num_classes,
        });
    }

    let scale = 1.0 / batch as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    let mut probs = vec![0.0f64; num_classes];
    for (row, &label) in logits.chunks_exact(num_classes).zip(labels) {
        let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (p, v) in probs.iter_mut().zip(row) {
            *p = (v.as_f64() - max).exp();
            total += *p;
        }
        loss += total.ln() - (row[label].as_f64() - max);
        for (k, p) in probs.iter().enumerate() {
            let target = if k == label { 1.0 } else { 0.0 };
            grad.push(T::of((p / total - target) * scale));
        }
    }
    Ok((loss * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_c() {
        let (loss, _) = cross_entropy(&[0.3f32; 10], &[4], 10).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_true_class_drives_loss_to_zero() {
        let mut logits = [0.0f64; 10];
        logits[2] = 50.0;
        let (loss, _) = cross_entropy(&logits, &[2], 10).unwrap();
        assert!((0.0..1e-9).contains(&loss), "{loss}");
    }

    #[test]
    fn matches_scalar_softmax_oracle() {
        let logits = [0.5f64, -1.2, 2.0, 0.0, 0.3, 0.3, -0.7, 1.1, 4.0, -2.5, 0.9, 0.1];
        let labels = [2, 0, 1, 1];
        let (loss, _) = cross_entropy(&logits, &labels, 3).unwrap();
        let mut expected = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            let row = &logits[r * 3..r * 3 + 3];
            let denom: f64 = row.iter().map(|v| v.exp()).sum();
            expected += -(row[y].exp() / denom).ln();
        }
        expected /= 4.0;
        assert!((loss - expected).abs() < 1e-6);
    }

    #[test]
    fn rejects_out_of_range_label() {
        let err = cross_entropy(&[0.0f32; 6], &[0, 3], 3).unwrap_err();
        assert!(matches!(err, Error::Label { index: 1, label: 3, .. }));
    }
}
