//! The federated protocol: server rounds, shard-weighted model averaging,
//! class-prototype banks, client local training and evaluation.

mod aggregate;
mod bank;
pub mod checkpoint;
mod client;
mod evaluate;
mod report;
mod server;

pub use aggregate::aggregate_weights;
pub use bank::{aggregate_reps, classwise_reps, BankStrategy, ClassRep, RepBank};
pub use client::{local_training, ClientMetrics, ClientPayload, ClientState};
pub use evaluate::evaluate;
pub use report::{read_jsonl, write_jsonl, RoundReport};
pub use server::{run_experiment, ExperimentOutcome, Federation, ServerState};
