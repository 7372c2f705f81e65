//! Deterministic federated-learning simulator.
//!
//! Clients train a small network locally on non-IID shards, regularized by a
//! model-contrastive term (pull toward the global model's projection, push away
//! from the client's previous model) and a shared class-wise contrastive term
//! (pull toward the server-distributed prototype of the sample's class, push
//! away from the other classes' prototypes). The server averages weights by
//! shard size and pools the clients' class prototypes for the next round.
//!
//! FedAvg and MOON fall out as special cases of the same engine by zeroing
//! the corresponding loss weights.

// NaN must fail these guards, so the negated comparisons are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod federation;
pub mod harness;
pub mod losses;
pub mod nn;
pub mod seed;

pub use error::{Error, Result};
