//! Run configuration: a plain-text `key = value` file (with optional
//! `[section]` headers and `#` comments) overlaid by command-line overrides.
//!
//! The method preset decides the defaults for the loss weights; every other
//! default is the same across presets.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::data::{PartitionSpec, SyntheticSpec};
use crate::error::{Error, Result};
use crate::federation::BankStrategy;
use crate::losses::{mu_glob_at_round, ContrastiveContext, ScheduleSpec};
use crate::nn::{ModelArchitecture, SgdParams, Shape3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    FedAvg,
    Moon,
    FedSsc,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::FedAvg, Method::Moon, Method::FedSsc];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::FedAvg => "fedavg",
            Method::Moon => "moon",
            Method::FedSsc => "fedssc",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fedavg" => Ok(Method::FedAvg),
            "moon" => Ok(Method::Moon),
            "fedssc" => Ok(Method::FedSsc),
            _ => Err(format!("unknown preset `{s}` (fedavg | moon | fedssc)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Cifar10,
    Synthetic,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Cifar10 => "cifar10",
            DatasetKind::Synthetic => "synthetic",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cifar10" => Ok(DatasetKind::Cifar10),
            "synthetic" => Ok(DatasetKind::Synthetic),
            _ => Err(format!("unknown dataset `{s}` (cifar10 | synthetic)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchPreset {
    LeNet,
    Mlp,
}

impl fmt::Display for ArchPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchPreset::LeNet => "lenet",
            ArchPreset::Mlp => "mlp",
        })
    }
}

impl FromStr for ArchPreset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lenet" => Ok(ArchPreset::LeNet),
            "mlp" => Ok(ArchPreset::Mlp),
            _ => Err(format!("unknown architecture `{s}` (lenet | mlp)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub tau: f64,
    pub mu_moon: f64,
    pub mu_glob_start: f64,
    pub mu_glob_end: f64,
    pub rounds: usize,
    pub warmup_rounds: usize,
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub devices: usize,
    pub beta: f64,
    pub threshold: usize,
    pub bank_strategy: BankStrategy,
    pub k_samples: usize,
    pub persist_velocity: bool,
    pub equalize_shards: bool,
    pub dataset: DatasetKind,
    pub data_dir: PathBuf,
    pub synth_classes: usize,
    pub synth_dim: usize,
    pub synth_per_class: usize,
    pub synth_separation: f64,
    pub data_seed: u64,
    pub arch: ArchPreset,
    pub mlp_hidden: Vec<usize>,
    pub proj_dim: usize,
    pub seed: u64,
    pub target_acc: f64,
}

/// Every accepted key, in serialization order.
pub const KEYS: [&str; 31] = [
    "preset",
    "tau",
    "mu_moon",
    "mu_glob_start",
    "mu_glob_end",
    "rounds",
    "warmup_rounds",
    "lr",
    "momentum",
    "weight_decay",
    "batch_size",
    "local_epochs",
    "devices",
    "beta",
    "threshold",
    "bank_strategy",
    "k_samples",
    "persist_velocity",
    "equalize_shards",
    "dataset",
    "data_dir",
    "synth_classes",
    "synth_dim",
    "synth_per_class",
    "synth_separation",
    "data_seed",
    "arch",
    "mlp_hidden",
    "proj_dim",
    "seed",
    "target_acc",
];

impl TrainConfig {
    /// Defaults for `method` with the CIFAR-10 setup.
    pub fn preset(method: Method) -> Self {
        let (mu_moon, glob) = match method {
            Method::FedAvg => (0.0, (0.0, 0.0)),
            Method::Moon => (5.0, (0.0, 0.0)),
            Method::FedSsc => (5.0, (1.0, 0.0001)),
        };
        Self {
            method,
            tau: 0.5,
            mu_moon,
            mu_glob_start: glob.0,
            mu_glob_end: glob.1,
            rounds: 100,
            warmup_rounds: 5,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 1e-5,
            batch_size: 64,
            local_epochs: 10,
            devices: 10,
            beta: 0.5,
            threshold: 10,
            bank_strategy: BankStrategy::SampleK,
            k_samples: 3,
            persist_velocity: false,
            equalize_shards: false,
            dataset: DatasetKind::Cifar10,
            data_dir: PathBuf::from("data/cifar-10-batches-bin"),
            synth_classes: 4,
            synth_dim: 32,
            synth_per_class: 400,
            synth_separation: 2.6,
            data_seed: 0,
            arch: ArchPreset::LeNet,
            mlp_hidden: vec![64],
            proj_dim: 256,
            seed: 0,
            target_acc: 0.68,
        }
    }

    /// Whether clients compute and upload class-wise representations.
    pub fn shares_reps(&self) -> bool {
        self.mu_glob_start > 0.0 || self.mu_glob_end > 0.0
    }

    pub fn schedule(&self) -> ScheduleSpec {
        ScheduleSpec {
            mu_glob_start: self.mu_glob_start,
            mu_glob_end: self.mu_glob_end,
            rounds: self.rounds,
            warmup_rounds: self.warmup_rounds,
        }
    }

    pub fn mu_glob(&self, round: usize) -> f64 {
        mu_glob_at_round(round, &self.schedule())
    }

    pub fn context(&self, round: usize) -> Result<ContrastiveContext> {
        ContrastiveContext::new(self.tau, self.mu_moon, self.mu_glob(round))
    }

    pub fn sgd(&self) -> SgdParams {
        SgdParams {
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }

    pub fn partition(&self) -> PartitionSpec {
        PartitionSpec {
            beta: self.beta,
            devices: self.devices,
            seed: self.seed,
            equalize: self.equalize_shards,
        }
    }

    pub fn synthetic(&self) -> SyntheticSpec {
        SyntheticSpec {
            classes: self.synth_classes,
            dim: self.synth_dim,
            per_class: self.synth_per_class,
            separation: self.synth_separation,
            seed: self.data_seed,
        }
    }

    pub fn architecture(&self, input: Shape3, num_classes: usize) -> ModelArchitecture {
        match self.arch {
            ArchPreset::LeNet => {
                let mut a = ModelArchitecture::lenet(num_classes);
                a.input = input;
                a
            }
            ArchPreset::Mlp => ModelArchitecture::mlp(input.size(), &self.mlp_hidden, self.proj_dim, num_classes),
        }
    }

    /// Collects every violated constraint, keyed by config name.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                errs.push(msg);
            }
        };
        check(self.tau > 0.0, format!("tau: must be > 0 (got {})", self.tau));
        check(self.mu_moon >= 0.0, format!("mu_moon: must be >= 0 (got {})", self.mu_moon));
        check(self.mu_glob_end >= 0.0, format!("mu_glob_end: must be >= 0 (got {})", self.mu_glob_end));
        check(
            self.mu_glob_start >= self.mu_glob_end,
            format!(
                "mu_glob_start: must be >= mu_glob_end (got {} < {})",
                self.mu_glob_start, self.mu_glob_end
            ),
        );
        check(self.lr > 0.0 && self.lr.is_finite(), format!("lr: must be > 0 (got {})", self.lr));
        check(
            (0.0..1.0).contains(&self.momentum),
            format!("momentum: must be in [0, 1) (got {})", self.momentum),
        );
        check(self.weight_decay >= 0.0, format!("weight_decay: must be >= 0 (got {})", self.weight_decay));
        check(self.batch_size >= 1, "batch_size: must be >= 1".into());
        check(self.devices >= 1, "devices: must be >= 1".into());
        check(self.beta > 0.0, format!("beta: must be > 0 (got {})", self.beta));
        check(self.k_samples >= 1, "k_samples: must be >= 1".into());
        check(
            (0.0..=1.0).contains(&self.target_acc),
            format!("target_acc: must be in [0, 1] (got {})", self.target_acc),
        );
        check(self.proj_dim >= 1, "proj_dim: must be >= 1".into());
        check(
            self.mlp_hidden.iter().all(|&h| h > 0),
            "mlp_hidden: widths must be positive".into(),
        );
        if self.dataset == DatasetKind::Synthetic {
            check(self.synth_classes >= 2, "synth_classes: must be >= 2".into());
            check(self.synth_dim >= 2, "synth_dim: must be >= 2".into());
            check(self.synth_per_class >= 1, "synth_per_class: must be >= 1".into());
            check(
                self.synth_separation >= 0.0 && self.synth_separation.is_finite(),
                "synth_separation: must be finite and >= 0".into(),
            );
        }
        if self.mu_glob_start > 0.0 {
            check(
                self.rounds > self.warmup_rounds,
                format!(
                    "warmup_rounds: must be < rounds when mu_glob is active (got {} >= {})",
                    self.warmup_rounds, self.rounds
                ),
            );
        }
        match self.method {
            Method::FedAvg => {
                check(self.mu_moon == 0.0, "mu_moon: preset fedavg requires 0".into());
                check(
                    self.mu_glob_start == 0.0 && self.mu_glob_end == 0.0,
                    "mu_glob_start/mu_glob_end: preset fedavg requires 0".into(),
                );
            }
            Method::Moon => check(
                self.mu_glob_start == 0.0 && self.mu_glob_end == 0.0,
                "mu_glob_start/mu_glob_end: preset moon requires 0".into(),
            ),
            Method::FedSsc => {}
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "preset" => self.method.to_string(),
            "tau" => self.tau.to_string(),
            "mu_moon" => self.mu_moon.to_string(),
            "mu_glob_start" => self.mu_glob_start.to_string(),
            "mu_glob_end" => self.mu_glob_end.to_string(),
            "rounds" => self.rounds.to_string(),
            "warmup_rounds" => self.warmup_rounds.to_string(),
            "lr" => self.lr.to_string(),
            "momentum" => self.momentum.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "local_epochs" => self.local_epochs.to_string(),
            "devices" => self.devices.to_string(),
            "beta" => self.beta.to_string(),
            "threshold" => self.threshold.to_string(),
            "bank_strategy" => self.bank_strategy.to_string(),
            "k_samples" => self.k_samples.to_string(),
            "persist_velocity" => self.persist_velocity.to_string(),
            "equalize_shards" => self.equalize_shards.to_string(),
            "dataset" => self.dataset.to_string(),
            "data_dir" => self.data_dir.display().to_string(),
            "synth_classes" => self.synth_classes.to_string(),
            "synth_dim" => self.synth_dim.to_string(),
            "synth_per_class" => self.synth_per_class.to_string(),
            "synth_separation" => self.synth_separation.to_string(),
            "data_seed" => self.data_seed.to_string(),
            "arch" => self.arch.to_string(),
            "mlp_hidden" => self
                .mlp_hidden
                .iter()
                .map(|h| h.to_string())
                .collect::<Vec<_>>()
                .join(","),
            "proj_dim" => self.proj_dim.to_string(),
            "seed" => self.seed.to_string(),
            "target_acc" => self.target_acc.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Resolved key/value pairs in [`KEYS`] order.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        KEYS.iter().map(|k| (k.to_string(), self.value_of(k))).collect()
    }

    /// Serializes every key so that [`parse_config`] reproduces `self`.
    pub fn to_text(&self) -> String {
        KEYS.iter().map(|k| format!("{k} = {}\n", self.value_of(k))).collect()
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
            value.parse().map_err(|_| format!("{key}: cannot parse `{value}`"))
        }
        match key {
            "tau" => self.tau = num(key, value)?,
            "mu_moon" => self.mu_moon = num(key, value)?,
            "mu_glob_start" => self.mu_glob_start = num(key, value)?,
            "mu_glob_end" => self.mu_glob_end = num(key, value)?,
            "rounds" => self.rounds = num(key, value)?,
            "warmup_rounds" => self.warmup_rounds = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "momentum" => self.momentum = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "local_epochs" => self.local_epochs = num(key, value)?,
            "devices" => self.devices = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "threshold" => self.threshold = num(key, value)?,
            "bank_strategy" => self.bank_strategy = value.parse().map_err(|e| format!("{key}: {e}"))?,
            "k_samples" => self.k_samples = num(key, value)?,
            "persist_velocity" => self.persist_velocity = num(key, value)?,
            "equalize_shards" => self.equalize_shards = num(key, value)?,
            "dataset" => {
                self.dataset = value.parse().map_err(|e| format!("{key}: {e}"))?;
            }
            "data_dir" => self.data_dir = PathBuf::from(value),
            "synth_classes" => self.synth_classes = num(key, value)?,
            "synth_dim" => self.synth_dim = num(key, value)?,
            "synth_per_class" => self.synth_per_class = num(key, value)?,
            "synth_separation" => self.synth_separation = num(key, value)?,
            "data_seed" => self.data_seed = num(key, value)?,
            "arch" => self.arch = value.parse().map_err(|e| format!("{key}: {e}"))?,
            "mlp_hidden" => {
                self.mlp_hidden = if value.trim().is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|v| num(key, v.trim()))
                        .collect::<std::result::Result<_, _>>()?
                };
            }
            "proj_dim" => self.proj_dim = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "target_acc" => self.target_acc = num(key, value)?,
            _ => return Err(format!("{key}: unknown key")),
        }
        Ok(())
    }
}

/// Splits `key = value` lines, skipping blanks, `#` comments and `[section]` headers.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    let mut errs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) => pairs.push((k.trim().to_string(), v.trim().to_string())),
            None => errs.push(format!("line {}: expected `key = value`", n + 1)),
        }
    }
    if errs.is_empty() {
        Ok(pairs)
    } else {
        Err(Error::Config(errs))
    }
}

/// Resolves a config from file text plus overrides (overrides win).
///
/// The preset is taken from the overrides, then the file, then `fedssc`.
/// When the dataset is synthetic and no architecture is given, the MLP is used.
pub fn parse_config(file_text: &str, overrides: &[(String, String)]) -> Result<TrainConfig> {
    let file = parse_pairs(file_text)?;
    let all: Vec<&(String, String)> = file.iter().chain(overrides).collect();

    let mut errs = Vec::new();
    let method = match all.iter().rev().find(|(k, _)| k == "preset") {
        Some((_, v)) => v.parse().unwrap_or_else(|e: String| {
            errs.push(format!("preset: {e}"));
            Method::FedSsc
        }),
        None => Method::FedSsc,
    };
    let mut cfg = TrainConfig::preset(method);
    let mut arch_given = false;
    for (k, v) in &all {
        if k == "preset" {
            continue;
        }
        arch_given |= k == "arch";
        if let Err(e) = cfg.set(k, v) {
            errs.push(e);
        }
    }
    if !arch_given && cfg.dataset == DatasetKind::Synthetic {
        cfg.arch = ArchPreset::Mlp;
    }
    if let Err(Error::Config(more)) = cfg.validate() {
        errs.extend(more);
    }
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ov(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_file_gives_documented_defaults() {
        let cfg = parse_config("", &ov(&[("preset", "fedssc")])).unwrap();
        assert_eq!(cfg.tau, 0.5);
        assert_eq!(cfg.mu_moon, 5.0);
        assert_eq!(cfg.lr, 0.01);
        assert_eq!(cfg.momentum, 0.9);
        assert_eq!(cfg.weight_decay, 1e-5);
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.devices, 10);
        assert_eq!(cfg.beta, 0.5);
        assert_eq!(cfg.rounds, 100);
        assert_eq!(cfg.warmup_rounds, 5);
        assert_eq!((cfg.mu_glob_start, cfg.mu_glob_end), (1.0, 0.0001));
        assert_eq!(cfg.arch, ArchPreset::LeNet);
    }

    #[test]
    fn override_beats_file() {
        let cfg = parse_config("beta = 1.0\n", &ov(&[("beta", "0.2")])).unwrap();
        assert_eq!(cfg.beta, 0.2);
        assert_eq!(cfg.rounds, 100);
    }

    #[test]
    fn negative_mu_moon_is_named() {
        let err = parse_config("mu_moon = -1", &[]).unwrap_err();
        assert!(err.to_string().contains("mu_moon"), "{err}");
    }

    #[test]
    fn every_offending_key_is_listed() {
        let err = parse_config("bogus = 1\ntau = 0\nlr = abc\n", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus") && msg.contains("lr"), "{msg}");
        let err = parse_config("tau = 0\nbeta = -1\n", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("tau") && msg.contains("beta"), "{msg}");
    }

    #[test]
    fn sections_and_comments_are_ignored() {
        let text = "# run\n[optimizer]\nlr = 0.05 # faster\n\n[data]\nbeta=5\n";
        let cfg = parse_config(text, &[]).unwrap();
        assert_eq!(cfg.lr, 0.05);
        assert_eq!(cfg.beta, 5.0);
    }

    #[test]
    fn preset_consistency_enforced() {
        assert!(parse_config("preset = fedavg\nmu_moon = 5\n", &[]).is_err());
        assert!(parse_config("preset = moon\nmu_glob_start = 1\n", &[]).is_err());
        let avg = parse_config("preset = fedavg", &[]).unwrap();
        assert_eq!((avg.mu_moon, avg.mu_glob_start), (0.0, 0.0));
    }

    #[test]
    fn short_runs_allowed_without_class_term() {
        let cfg = parse_config("", &ov(&[("preset", "fedavg"), ("rounds", "5")])).unwrap();
        assert_eq!(cfg.rounds, 5);
        assert!(parse_config("", &ov(&[("preset", "fedssc"), ("rounds", "5")])).is_err());
    }

    #[test]
    fn synthetic_defaults_to_mlp() {
        let cfg = parse_config("dataset = synthetic", &[]).unwrap();
        assert_eq!(cfg.arch, ArchPreset::Mlp);
        let cfg = parse_config("dataset = synthetic\narch = lenet", &[]).unwrap();
        assert_eq!(cfg.arch, ArchPreset::LeNet);
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = parse_config("dataset = synthetic\nbeta = 0.2\nmlp_hidden = 16,8\n", &[]).unwrap();
        cfg.lr = 0.0123;
        cfg.weight_decay = 3e-7;
        assert_eq!(parse_config(&cfg.to_text(), &[]).unwrap(), cfg);
    }
}
