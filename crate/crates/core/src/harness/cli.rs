use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::archive::{plot_csv, MetricsArchive};
use super::config::parse_config;
use super::experiment::{load_datasets, run_to_dir, sweep_beta, sweep_k};
use super::verify;
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "fedssc", version, about = "Federated training with shared class-wise contrastive regularization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one configuration and write its archive.
    Run(ConfigArgs),
    /// All three methods across Dirichlet concentrations.
    SweepBeta {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.5,1,5")]
        betas: Vec<f64>,
    },
    /// The configured method across prototype sample sizes.
    SweepK {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,5")]
        ks: Vec<usize>,
    },
    /// Accuracy-per-round CSV from archive files or directories of them.
    ExportPlot {
        #[arg(required = true)]
        archives: Vec<PathBuf>,
        /// Write here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Gradient checks and loss oracles.
    Verify,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Plain-text `key = value` file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub data_dir: Option<String>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub devices: Option<usize>,
    #[arg(long)]
    pub local_epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Any config key, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
}

impl ConfigArgs {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        push("preset", self.preset.clone());
        push("dataset", self.dataset.clone());
        push("data_dir", self.data_dir.clone());
        push("rounds", self.rounds.map(|v| v.to_string()));
        push("beta", self.beta.map(|v| v.to_string()));
        push("devices", self.devices.map(|v| v.to_string()));
        push("local_epochs", self.local_epochs.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("--set {kv}: expected KEY=VALUE")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    pub fn resolve(&self) -> Result<super::TrainConfig> {
        let text = match &self.config {
            Some(path) => fs::read_to_string(path).map_err(|e| Error::io(path, e))?,
            None => String::new(),
        };
        parse_config(&text, &self.overrides()?)
    }
}

fn collect_archives(paths: &[PathBuf]) -> Result<Vec<MetricsArchive>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|e| e.extension().is_some_and(|x| x == "json"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(p.clone());
        }
    }
    files.iter().map(MetricsArchive::load).collect()
}

fn print_summary(a: &MetricsArchive, out: &Path) {
    let reached = a.summary.rounds_to_target.map_or("not reached".to_string(), |r| r.to_string());
    println!(
        "{}: final {:.4} best {:.4} rounds to {:.2}: {} -> {}",
        a.run_id,
        a.summary.final_acc,
        a.summary.best_acc,
        a.summary.target_acc,
        reached,
        out.display()
    );
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let (train, test) = load_datasets(&cfg)?;
            let archive = run_to_dir(&cfg, &train, &test, &args.out)?;
            print_summary(&archive, &args.out);
        }
        Command::SweepBeta { config, betas } => {
            let cfg = config.resolve()?;
            for a in sweep_beta(&cfg, &betas, &config.out)? {
                print_summary(&a, &config.out);
            }
        }
        Command::SweepK { config, ks } => {
            let cfg = config.resolve()?;
            for a in sweep_k(&cfg, &ks, &config.out)? {
                print_summary(&a, &config.out);
            }
        }
        Command::ExportPlot { archives, output } => {
            let csv = plot_csv(&collect_archives(&archives)?)?;
            match output {
                Some(path) => fs::write(&path, csv).map_err(|e| Error::io(&path, e))?,
                None => print!("{csv}"),
            }
        }
        Command::Verify => {
            let checks = verify::run_all();
            for c in &checks {
                let status = if c.passed { "PASS" } else { "FAIL" };
                println!("{status} {} ({} ms): {}", c.name, c.millis, c.detail);
            }
            let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
            if !failed.is_empty() {
                return Err(Error::InvalidArgument(format!("verify failed: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and executes. Usage errors are
/// reported as a single line.
pub fn run_cli<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| {
        let msg = e.to_string();
        Error::InvalidArgument(msg.lines().next().unwrap_or("invalid arguments").to_string())
    })?;
    execute(cli)
}
