use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Metrics for one communication round.
///
/// `round` counts completed rounds (1-based); `mu_glob` and `classes_in_bank`
/// describe the state broadcast at the start of that round. Loss components
/// are means over clients of each client's mean over its batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub acc: f64,
    pub l_class: f64,
    pub l_moon: f64,
    pub l_glob: f64,
    pub mu_glob: f64,
    pub classes_in_bank: usize,
    pub wall_ms: u64,
}

impl RoundReport {
    /// Same report with the timing field zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_ms: 0,
            ..self.clone()
        }
    }
}

pub fn write_jsonl(path: impl AsRef<Path>, reports: &[RoundReport]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<RoundReport>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_has_the_documented_fields() {
        let r = RoundReport {
            round: 3,
            acc: 0.5,
            l_class: 1.0,
            l_moon: 0.69,
            l_glob: 0.2,
            mu_glob: 1.0,
            classes_in_bank: 4,
            wall_ms: 12,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        write_jsonl(&path, &[r.clone(), r.clone()]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        let mut keys: Vec<&str> = first.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            ["acc", "classes_in_bank", "l_class", "l_glob", "l_moon", "mu_glob", "round", "wall_ms"]
        );
        assert_eq!(read_jsonl(&path).unwrap(), vec![r.clone(), r]);
    }
}
