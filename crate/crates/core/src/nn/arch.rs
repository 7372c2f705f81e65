use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channels × height × width. Flat vectors use `(dim, 1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape3 {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn flat(dim: usize) -> Self {
        Self::new(dim, 1, 1)
    }

    pub fn size(&self) -> usize {
        self.channels * self.height * self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv2d {
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    MaxPool {
        size: usize,
        stride: usize,
    },
    /// Fully connected; flattens its input.
    Linear { out_features: usize },
    Relu,
}

/// Encoder, then projection head, then a single linear classifier over the
/// projection output. The projection output is the representation `z` both
/// contrastive terms act on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelArchitecture {
    pub input: Shape3,
    pub encoder: Vec<LayerSpec>,
    pub projection: Vec<LayerSpec>,
    pub num_classes: usize,
}

impl ModelArchitecture {
    /// Two 5×5 convolutions (3→6→16 channels) each followed by a rectifier and
    /// 2×2 max-pool, two rectified fully-connected layers (400→120→84), then a
    /// 256-256 projection head.
    pub fn lenet(num_classes: usize) -> Self {
        use LayerSpec::*;
        Self {
            input: Shape3::new(3, 32, 32),
            encoder: vec![
                Conv2d {
                    out_channels: 6,
                    kernel: 5,
                    stride: 1,
                },
                Relu,
                MaxPool { size: 2, stride: 2 },
                Conv2d {
                    out_channels: 16,
                    kernel: 5,
                    stride: 1,
                },
                Relu,
                MaxPool { size: 2, stride: 2 },
                Linear { out_features: 120 },
                Relu,
                Linear { out_features: 84 },
                Relu,
            ],
            projection: projection_head(256),
            num_classes,
        }
    }

    /// Rectified fully-connected encoder with the given hidden widths and a
    /// two-layer projection head of width `proj_dim`.
    pub fn mlp(input_dim: usize, hidden: &[usize], proj_dim: usize, num_classes: usize) -> Self {
        let encoder = hidden
            .iter()
            .flat_map(|&w| [LayerSpec::Linear { out_features: w }, LayerSpec::Relu])
            .collect();
        Self {
            input: Shape3::flat(input_dim),
            encoder,
            projection: projection_head(proj_dim),
            num_classes,
        }
    }

    pub fn layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.encoder.iter().chain(self.projection.iter())
    }

    /// Stable hash of the layer structure, written into checkpoints.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over a canonical description.
        let desc = format!(
            "{:?}|{:?}|{:?}|{}",
            self.input, self.encoder, self.projection, self.num_classes
        );
        desc.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }

    pub fn projection_dim(&self) -> usize {
        self.projection
            .iter()
            .rev()
            .find_map(|l| match l {
                LayerSpec::Linear { out_features } => Some(*out_features),
                _ => None,
            })
            .unwrap_or(0)
    }

    pub(crate) fn validate_basics(&self) -> Result<()> {
        if self.input.size() == 0 {
            return Err(Error::Architecture {
                layer: 0,
                reason: "input shape has zero size".into(),
            });
        }
        if self.num_classes < 2 {
            return Err(Error::Architecture {
                layer: self.encoder.len() + self.projection.len(),
                reason: format!("need at least 2 classes, got {}", self.num_classes),
            });
        }
        match self.projection.last() {
            Some(LayerSpec::Linear { out_features }) if *out_features > 0 => Ok(()),
            _ => Err(Error::Architecture {
                layer: self.encoder.len() + self.projection.len().saturating_sub(1),
                reason: "projection head must end with a non-empty linear layer".into(),
            }),
        }
    }
}

fn projection_head(dim: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Linear { out_features: dim },
        LayerSpec::Relu,
        LayerSpec::Linear { out_features: dim },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lenet_layer_counts() {
        let arch = ModelArchitecture::lenet(10);
        let count = |pred: fn(&LayerSpec) -> bool| arch.encoder.iter().filter(|l| pred(l)).count();
        assert_eq!(count(|l| matches!(l, LayerSpec::Conv2d { .. })), 2);
        assert_eq!(count(|l| matches!(l, LayerSpec::MaxPool { .. })), 2);
        assert_eq!(count(|l| matches!(l, LayerSpec::Linear { .. })), 2);
        assert_eq!(arch.projection_dim(), 256);
    }

    #[test]
    fn fingerprint_tracks_structure() {
        let a = ModelArchitecture::mlp(8, &[16], 4, 3);
        let b = ModelArchitecture::mlp(8, &[16], 4, 4);
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
