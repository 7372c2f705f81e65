//! Gaussian-cluster stand-in for image data, plus a flat binary codec.
//!
//! File layout (little-endian): magic `FSSC`, version `u32`, classes `u32`,
//! dim `u32`, count `u64`, then `count` records of label `u16` and
//! `dim` × `f32`.

use std::fs;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{LabeledDataset, Provenance};
use crate::error::{Error, Result};
use crate::nn::Shape3;
use crate::seed;

const MAGIC: &[u8; 4] = b"FSSC";
const VERSION: u32 = 1;
const HEADER_BYTES: usize = 4 + 4 + 4 + 4 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub separation: f64,
    pub seed: u64,
}

/// Class means at distance `separation` from the origin along distinct axes
/// (random unit directions once classes outnumber dimensions), unit-variance
/// noise, and a per-class 80/20 train/test split.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    if spec.classes < 2 || spec.dim < 2 {
        return Err(Error::InvalidArgument(format!(
            "synthetic data needs classes >= 2 and dim >= 2 (got {} and {})",
            spec.classes, spec.dim
        )));
    }
    if spec.per_class == 0 || !spec.separation.is_finite() || spec.separation < 0.0 {
        return Err(Error::InvalidArgument(
            "synthetic data needs per_class > 0 and a finite, non-negative separation".into(),
        ));
    }
    let mut rng = seed::rng(seed::derive(spec.seed, &[seed::STREAM_SYNTHETIC]));
    let means: Vec<Vec<f64>> = (0..spec.classes)
        .map(|k| {
            if spec.classes <= spec.dim {
                (0..spec.dim).map(|j| if j == k { spec.separation } else { 0.0 }).collect()
            } else {
                let v: Vec<f64> = (0..spec.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.into_iter().map(|x| x / n * spec.separation).collect()
            }
        })
        .collect();

    let n_test = spec.per_class / 5;
    let n_train = spec.per_class - n_test;
    let (mut train_x, mut train_y) = (Vec::new(), Vec::new());
    let (mut test_x, mut test_y) = (Vec::new(), Vec::new());
    for (k, mean) in means.iter().enumerate() {
        for i in 0..spec.per_class {
            let (xs, ys) = if i < n_train {
                (&mut train_x, &mut train_y)
            } else {
                (&mut test_x, &mut test_y)
            };
            xs.extend(mean.iter().map(|m| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                (m + noise) as f32
            }));
            ys.push(k);
        }
    }
    let shape = Shape3::flat(spec.dim);
    Ok((
        LabeledDataset::new(shape, train_x, train_y, spec.classes, Provenance::Synthetic)?,
        LabeledDataset::new(shape, test_x, test_y, spec.classes, Provenance::Synthetic)?,
    ))
}

pub fn write_synthetic(path: impl AsRef<Path>, ds: &LabeledDataset) -> Result<()> {
    let path = path.as_ref();
    let dim = ds.sample_size();
    let mut out = Vec::with_capacity(HEADER_BYTES + ds.len() * (2 + 4 * dim));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.num_classes() as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    for i in 0..ds.len() {
        out.extend_from_slice(&(ds.label(i) as u16).to_le_bytes());
        for v in ds.sample(i) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_synthetic(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_BYTES || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "missing FSSC header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let classes = u32_at(8) as usize;
    let dim = u32_at(12) as usize;
    let count = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    let record = 2 + 4 * dim;
    if bytes.len() != HEADER_BYTES + count * record {
        return Err(Error::format(
            path,
            format!("expected {} bytes for {count} records, found {}", HEADER_BYTES + count * record, bytes.len()),
        ));
    }
    let mut features = Vec::with_capacity(count * dim);
    let mut labels = Vec::with_capacity(count);
    for rec in bytes[HEADER_BYTES..].chunks_exact(record) {
        labels.push(u16::from_le_bytes([rec[0], rec[1]]) as usize);
        features.extend(
            rec[2..]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))),
        );
    }
    LabeledDataset::new(Shape3::flat(dim), features, labels, classes, Provenance::Synthetic)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SyntheticSpec {
        SyntheticSpec {
            classes: 4,
            dim: 8,
            per_class: 100,
            separation: 3.0,
            seed: 9,
        }
    }

    #[test]
    fn split_arithmetic() {
        let (train, test) = make_synthetic(&spec()).unwrap();
        assert_eq!(train.len(), 320);
        assert_eq!(test.len(), 80);
        assert_eq!(train.class_counts(), vec![80; 4]);
        assert_eq!(test.class_counts(), vec![20; 4]);
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(make_synthetic(&spec()).unwrap(), make_synthetic(&spec()).unwrap());
        let other = SyntheticSpec { seed: 10, ..spec() };
        assert_ne!(make_synthetic(&spec()).unwrap().0, make_synthetic(&other).unwrap().0);
    }

    #[test]
    fn rejects_degenerate_parameters() {
        assert!(make_synthetic(&SyntheticSpec { classes: 1, ..spec() }).is_err());
        assert!(make_synthetic(&SyntheticSpec { dim: 1, ..spec() }).is_err());
    }

    #[test]
    fn more_classes_than_dims() {
        let s = SyntheticSpec { classes: 5, dim: 3, ..spec() };
        let (train, _) = make_synthetic(&s).unwrap();
        assert_eq!(train.num_classes(), 5);
    }

    #[test]
    fn file_round_trip() {
        let (train, _) = make_synthetic(&spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("syn.bin");
        write_synthetic(&path, &train).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"FSSC");
        assert_eq!(bytes.len(), HEADER_BYTES + 320 * (2 + 32));
        assert_eq!(read_synthetic(&path).unwrap(), train);
    }

    #[test]
    fn truncated_file_rejected() {
        let (train, _) = make_synthetic(&spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("syn.bin");
        write_synthetic(&path, &train).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_synthetic(&path), Err(Error::Format { .. })));
    }
}
