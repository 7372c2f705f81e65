//! Configuration, experiment presets, metrics archives and the CLI.

mod archive;
mod cli;
mod config;
mod experiment;
pub mod verify;

pub use archive::{plot_csv, rounds_to_target, MetricsArchive, Summary};
pub use cli::{execute, run_cli, Cli, Command, ConfigArgs};
pub use config::{parse_config, parse_pairs, ArchPreset, DatasetKind, Method, TrainConfig, KEYS};
pub use experiment::{
    archive_of, centralized_accuracy, load_datasets, preset_with, run_id, run_to_dir, sweep_beta, sweep_k,
};
