use super::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Named parameter arrays in layer order, tagged with the architecture
/// fingerprint they belong to. Used for weights, gradients and optimizer
/// velocity alike.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T = f32> {
    fingerprint: u64,
    tensors: Vec<Tensor<T>>,
}

pub type ModelWeights = ParamSet<f32>;
pub type Gradients = ParamSet<f32>;

impl<T: Scalar> ParamSet<T> {
    pub(crate) fn new(fingerprint: u64, tensors: Vec<Tensor<T>>) -> Self {
        Self {
            fingerprint,
            tensors,
        }
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            fingerprint: self.fingerprint,
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: vec![T::zero(); t.data.len()],
                })
                .collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.tensors.iter().flat_map(|t| t.data.iter().copied())
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            fingerprint: self.fingerprint,
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|&v| U::of(v.as_f64())).collect(),
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in &mut self.tensors {
            for v in &mut t.data {
                *v *= factor;
            }
        }
    }

    /// Errors unless `other` has the same fingerprint and tensor shapes.
    pub fn ensure_congruent<U>(&self, other: &ParamSet<U>) -> Result<()> {
        if self.fingerprint != other.fingerprint {
            return Err(Error::Fingerprint {
                expected: self.fingerprint,
                got: other.fingerprint,
            });
        }
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::Shape {
                context: "parameter set",
                expected: format!("{} tensors", self.tensors.len()),
                got: format!("{} tensors", other.tensors.len()),
            });
        }
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            if a.shape != b.shape || a.data.len() != b.data.len() {
                return Err(Error::Shape {
                    context: "parameter tensor",
                    expected: format!("{} {:?}", a.name, a.shape),
                    got: format!("{} {:?}", b.name, b.shape),
                });
            }
        }
        Ok(())
    }

    /// Largest absolute elementwise difference; `None` if not congruent.
    pub fn max_abs_diff(&self, other: &Self) -> Option<f64> {
        self.ensure_congruent(other).ok()?;
        Some(
            self.values()
                .zip(other.values())
                .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
                .fold(0.0, f64::max),
        )
    }
}
