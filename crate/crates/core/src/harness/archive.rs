use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::RoundReport;

/// 1-based index of the first report reaching `target`, or `None`.
pub fn rounds_to_target(reports: &[RoundReport], target: f64) -> Option<usize> {
    reports.iter().position(|r| r.acc >= target).map(|i| i + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub best_acc: f64,
    pub final_acc: f64,
    pub target_acc: f64,
    /// `None` when the target was never reached.
    pub rounds_to_target: Option<usize>,
}

impl Summary {
    pub fn from_reports(reports: &[RoundReport], target_acc: f64) -> Self {
        Self {
            best_acc: reports.iter().map(|r| r.acc).fold(0.0, f64::max),
            final_acc: reports.last().map_or(0.0, |r| r.acc),
            target_acc,
            rounds_to_target: rounds_to_target(reports, target_acc),
        }
    }
}

/// One run: the resolved config, its per-round reports and a summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsArchive {
    pub run_id: String,
    pub config: BTreeMap<String, String>,
    pub shard_sizes: Vec<usize>,
    pub reports: Vec<RoundReport>,
    pub summary: Summary,
}

impl MetricsArchive {
    pub fn method(&self) -> &str {
        self.config.get("preset").map_or("unknown", String::as_str)
    }

    /// Checks that rounds increase and the summary agrees with the reports.
    pub fn check_integrity(&self) -> Result<()> {
        if self.reports.windows(2).any(|w| w[1].round <= w[0].round) {
            return Err(Error::InvalidArgument(format!("{}: rounds not strictly increasing", self.run_id)));
        }
        if self.summary != Summary::from_reports(&self.reports, self.summary.target_acc) {
            return Err(Error::InvalidArgument(format!("{}: summary disagrees with reports", self.run_id)));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let archive: Self = serde_json::from_str(&text)?;
        archive.check_integrity()?;
        Ok(archive)
    }
}

/// CSV of accuracy per round with one column per method, in
/// `fedavg, moon, fedssc` order. Missing values are left empty.
pub fn plot_csv(archives: &[MetricsArchive]) -> Result<String> {
    let mut columns: BTreeMap<super::Method, &MetricsArchive> = BTreeMap::new();
    for a in archives {
        let method = a.method().parse().map_err(Error::InvalidArgument)?;
        if columns.insert(method, a).is_some() {
            return Err(Error::InvalidArgument(format!("two archives for method {method}")));
        }
    }
    let rounds = columns.values().flat_map(|a| a.reports.iter().map(|r| r.round)).max().unwrap_or(0);
    let mut out = String::from("round");
    for m in columns.keys() {
        out.push(',');
        out.push_str(&m.to_string());
    }
    out.push('\n');
    for round in 1..=rounds {
        out.push_str(&round.to_string());
        for a in columns.values() {
            out.push(',');
            if let Some(r) = a.reports.iter().find(|r| r.round == round) {
                out.push_str(&r.acc.to_string());
            }
        }
        out.push('\n');
    }
    Ok(out)
}
