//! Datasets, non-IID partitioning and seeded batch iteration.

mod batches;
pub mod cifar;
mod dataset;
mod partition;
pub mod synthetic;

pub use batches::{batches, Batch, Batches};
pub use cifar::{load_cifar10, load_cifar10_file, write_cifar10_file};
pub use dataset::{LabeledDataset, Provenance};
pub use partition::{dirichlet_partition, heterogeneity, ClientShard, PartitionSpec};
pub use synthetic::{make_synthetic, read_synthetic, write_synthetic, SyntheticSpec};
