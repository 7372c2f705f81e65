use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{ModelWeights, Network};

const CHUNK: usize = 500;

/// Top-1 accuracy; ties go to the lowest class id.
pub fn evaluate(net: &Network, w: &ModelWeights, test: &LabeledDataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("test set is empty".into()));
    }
    let all: Vec<usize> = (0..test.len()).collect();
    let mut correct = 0usize;
    for chunk in all.chunks(CHUNK) {
        let (inputs, labels) = test.gather(chunk);
        let trace = net.forward(w, &inputs)?;
        for (row, &label) in labels.iter().enumerate() {
            if argmax(trace.logits_row(row)) == label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
