use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Shape3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Cifar10,
    Synthetic,
}

/// Immutable labeled samples stored row-major in one buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    shape: Shape3,
    features: Vec<f32>,
    labels: Vec<usize>,
    num_classes: usize,
    provenance: Provenance,
}

impl LabeledDataset {
    pub fn new(
        shape: Shape3,
        features: Vec<f32>,
        labels: Vec<usize>,
        num_classes: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if features.len() != labels.len() * shape.size() {
            return Err(Error::Shape {
                context: "dataset features",
                expected: format!("{} x {}", labels.len(), shape.size()),
                got: format!("{} values", features.len()),
            });
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::Label {
                index,
                label,
                classes: num_classes,
            });
        }
        Ok(Self {
            shape,
            features,
            labels,
            num_classes,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn sample_size(&self) -> usize {
        self.shape.size()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let d = self.sample_size();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Copies the selected rows into a contiguous batch buffer.
    pub fn gather(&self, indices: &[usize]) -> (Vec<f32>, Vec<usize>) {
        let mut inputs = Vec::with_capacity(indices.len() * self.sample_size());
        for &i in indices {
            inputs.extend_from_slice(self.sample(i));
        }
        (inputs, indices.iter().map(|&i| self.labels[i]).collect())
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let (features, labels) = self.gather(indices);
        Self {
            features,
            labels,
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> Self {
        Self {
            shape: self.shape,
            features: Vec::new(),
            labels: Vec::new(),
            num_classes: self.num_classes,
            provenance: self.provenance,
        }
    }
}
