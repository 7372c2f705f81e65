use std::fs;
use std::path::Path;

use super::archive::{plot_csv, MetricsArchive, Summary};
use super::config::{DatasetKind, Method, TrainConfig};
use crate::data::{load_cifar10, make_synthetic, LabeledDataset};
use crate::error::{Error, Result};
use crate::federation::checkpoint::save_checkpoint;
use crate::federation::{run_experiment, write_jsonl, ExperimentOutcome};

pub fn load_datasets(cfg: &TrainConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    match cfg.dataset {
        DatasetKind::Cifar10 => load_cifar10(&cfg.data_dir),
        DatasetKind::Synthetic => make_synthetic(&cfg.synthetic()),
    }
}

pub fn run_id(cfg: &TrainConfig) -> String {
    format!("{}-{}-b{}-k{}-s{}", cfg.method, cfg.dataset, cfg.beta, cfg.k_samples, cfg.seed)
}

pub fn archive_of(cfg: &TrainConfig, outcome: &ExperimentOutcome) -> MetricsArchive {
    MetricsArchive {
        run_id: run_id(cfg),
        config: cfg.to_map(),
        shard_sizes: outcome.shard_sizes.clone(),
        summary: Summary::from_reports(&outcome.reports, cfg.target_acc),
        reports: outcome.reports.clone(),
    }
}

/// Accuracy of the same network trained on the whole training set for
/// `epochs` epochs with plain cross-entropy, as a reference ceiling.
pub fn centralized_accuracy(cfg: &TrainConfig, train: &LabeledDataset, test: &LabeledDataset, epochs: usize) -> Result<f64> {
    let mut central = TrainConfig {
        method: Method::FedAvg,
        mu_moon: 0.0,
        mu_glob_start: 0.0,
        mu_glob_end: 0.0,
        devices: 1,
        rounds: 1,
        local_epochs: epochs,
        ..cfg.clone()
    };
    central.equalize_shards = false;
    let outcome = run_experiment(&central, train, test)?;
    Ok(outcome.reports.last().map_or(0.0, |r| r.acc))
}

/// Runs one experiment and writes `<run_id>.jsonl`, `<run_id>.json` and
/// `<run_id>.fssw` into `out_dir`.
pub fn run_to_dir(cfg: &TrainConfig, train: &LabeledDataset, test: &LabeledDataset, out_dir: &Path) -> Result<MetricsArchive> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let outcome = run_experiment(cfg, train, test)?;
    let archive = archive_of(cfg, &outcome);
    write_jsonl(out_dir.join(format!("{}.jsonl", archive.run_id)), &outcome.reports)?;
    archive.save(out_dir.join(format!("{}.json", archive.run_id)))?;
    save_checkpoint(out_dir.join(format!("{}.fssw", archive.run_id)), &outcome.final_weights)?;
    Ok(archive)
}

pub fn preset_with(cfg: &TrainConfig, method: Method) -> TrainConfig {
    let defaults = TrainConfig::preset(method);
    TrainConfig {
        method,
        mu_moon: defaults.mu_moon,
        mu_glob_start: defaults.mu_glob_start,
        mu_glob_end: defaults.mu_glob_end,
        ..cfg.clone()
    }
}

/// All three methods at each β; writes a plot CSV per β.
pub fn sweep_beta(cfg: &TrainConfig, betas: &[f64], out_dir: &Path) -> Result<Vec<MetricsArchive>> {
    let (train, test) = load_datasets(cfg)?;
    let mut all = Vec::new();
    for &beta in betas {
        let mut per_beta = Vec::new();
        for method in Method::ALL {
            let run = TrainConfig { beta, ..preset_with(cfg, method) };
            per_beta.push(run_to_dir(&run, &train, &test, out_dir)?);
        }
        let csv = plot_csv(&per_beta)?;
        let path = out_dir.join(format!("beta-{beta}.csv"));
        fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
        all.extend(per_beta);
    }
    Ok(all)
}

/// The configured method at each prototype sample size `k`.
pub fn sweep_k(cfg: &TrainConfig, ks: &[usize], out_dir: &Path) -> Result<Vec<MetricsArchive>> {
    let (train, test) = load_datasets(cfg)?;
    let mut archives = Vec::new();
    let mut csv = String::from("round");
    for &k in ks {
        csv.push_str(&format!(",k{k}"));
        let run = TrainConfig { k_samples: k, ..cfg.clone() };
        archives.push(run_to_dir(&run, &train, &test, out_dir)?);
    }
    csv.push('\n');
    for round in 0..cfg.rounds {
        csv.push_str(&(round + 1).to_string());
        for a in &archives {
            csv.push(',');
            if let Some(r) = a.reports.get(round) {
                csv.push_str(&r.acc.to_string());
            }
        }
        csv.push('\n');
    }
    let path = out_dir.join("k-sweep.csv");
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    Ok(archives)
}
