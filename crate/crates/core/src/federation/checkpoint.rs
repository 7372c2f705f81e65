//! Model checkpoint: magic `FSSW`, architecture fingerprint `u64`, parameter
//! count `u64`, then every parameter array in layer order as little-endian `f32`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{ModelWeights, Network};

const MAGIC: &[u8; 4] = b"FSSW";
const HEADER_BYTES: usize = 4 + 8 + 8;

pub fn encode(w: &ModelWeights) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_BYTES + 4 * w.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&w.fingerprint().to_le_bytes());
    out.extend_from_slice(&(w.len() as u64).to_le_bytes());
    for v in w.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn save_checkpoint(path: impl AsRef<Path>, w: &ModelWeights) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(w)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>, net: &Network) -> Result<ModelWeights> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_BYTES || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "missing FSSW header"));
    }
    let fingerprint = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes"));
    if fingerprint != net.fingerprint() {
        return Err(Error::Fingerprint {
            expected: net.fingerprint(),
            got: fingerprint,
        });
    }
    let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    if bytes.len() != HEADER_BYTES + 4 * count {
        return Err(Error::format(
            path,
            format!("header declares {count} parameters but payload has {} bytes", bytes.len() - HEADER_BYTES),
        ));
    }
    let values = bytes[HEADER_BYTES..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    net.from_flat(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelArchitecture;

    #[test]
    fn save_and_load() {
        let net = Network::new(ModelArchitecture::mlp(5, &[7], 3, 4)).unwrap();
        let w = net.init(21);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.fssw");
        save_checkpoint(&path, &w).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"FSSW");
        assert_eq!(bytes.len(), 20 + 4 * net.param_count());
        assert_eq!(load_checkpoint(&path, &net).unwrap(), w);
    }

    #[test]
    fn wrong_architecture_rejected() {
        let net = Network::new(ModelArchitecture::mlp(5, &[7], 3, 4)).unwrap();
        let other = Network::new(ModelArchitecture::mlp(5, &[8], 3, 4)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.fssw");
        save_checkpoint(&path, &net.init(0)).unwrap();
        assert!(matches!(load_checkpoint(&path, &other), Err(Error::Fingerprint { .. })));
    }
}
