//! CIFAR-10 binary format: 3073-byte records of one label byte followed by
//! 1024 red, 1024 green and 1024 blue bytes, each plane row-major 32×32.

use std::fs;
use std::path::Path;

use super::dataset::{LabeledDataset, Provenance};
use crate::error::{Error, Result};
use crate::nn::Shape3;

pub const RECORD_BYTES: usize = 3073;
pub const PIXELS: usize = 3072;
const PLANE: usize = 1024;

pub const MEAN: [f32; 3] = [0.4914, 0.4822, 0.4465];
pub const STD: [f32; 3] = [0.2470, 0.2435, 0.2616];

pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";

fn normalize(byte: u8, channel: usize) -> f32 {
    (byte as f32 / 255.0 - MEAN[channel]) / STD[channel]
}

fn denormalize(value: f32, channel: usize) -> u8 {
    ((value * STD[channel] + MEAN[channel]) * 255.0).round().clamp(0.0, 255.0) as u8
}

fn parse(path: &Path, bytes: &[u8], features: &mut Vec<f32>, labels: &mut Vec<usize>) -> Result<()> {
    if !bytes.len().is_multiple_of(RECORD_BYTES) {
        return Err(Error::format(
            path,
            format!("size {} is not a multiple of {RECORD_BYTES}", bytes.len()),
        ));
    }
    for (i, record) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        let label = record[0];
        if label > 9 {
            return Err(Error::format(path, format!("record {i}: label byte {label} > 9")));
        }
        labels.push(label as usize);
        features.extend(
            record[1..]
                .iter()
                .enumerate()
                .map(|(j, &b)| normalize(b, j / PLANE)),
        );
    }
    Ok(())
}

fn read_files(paths: &[&Path]) -> Result<LabeledDataset> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let bytes = fs::read(path).map_err(|e| Error::io(*path, e))?;
        parse(path, &bytes, &mut features, &mut labels)?;
    }
    LabeledDataset::new(Shape3::new(3, 32, 32), features, labels, 10, Provenance::Cifar10)
}

/// Loads one binary batch file.
pub fn load_cifar10_file(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    read_files(&[path.as_ref()])
}

/// Loads the five training batches and the test batch from `dir`.
pub fn load_cifar10(dir: impl AsRef<Path>) -> Result<(LabeledDataset, LabeledDataset)> {
    let dir = dir.as_ref();
    let train_paths: Vec<_> = TRAIN_FILES.iter().map(|f| dir.join(f)).collect();
    let train_refs: Vec<&Path> = train_paths.iter().map(|p| p.as_path()).collect();
    let train = read_files(&train_refs)?;
    let test = read_files(&[&dir.join(TEST_FILE)])?;
    Ok((train, test))
}

/// Writes the selected samples back in the binary record format.
pub fn write_cifar10_file(path: impl AsRef<Path>, ds: &LabeledDataset, indices: &[usize]) -> Result<()> {
    let path = path.as_ref();
    if ds.shape() != Shape3::new(3, 32, 32) || ds.num_classes() > 10 {
        return Err(Error::InvalidArgument(
            "only 3x32x32 datasets with at most 10 classes fit the CIFAR-10 format".into(),
        ));
    }
    let mut out = Vec::with_capacity(indices.len() * RECORD_BYTES);
    for &i in indices {
        out.push(ds.label(i) as u8);
        out.extend(
            ds.sample(i)
                .iter()
                .enumerate()
                .map(|(j, &v)| denormalize(v, j / PLANE)),
        );
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
