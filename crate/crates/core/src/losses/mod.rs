//! Scalar objectives: cosine similarity, the model-contrastive (MOON) term,
//! the shared class-wise contrastive term, their weighted combination with
//! cross-entropy, and the decay schedule for the class-wise weight.
//!
//! Everything here works in `f64`. Gradients are taken w.r.t. the current
//! projection `z` only; global-model, previous-model and bank vectors are
//! constants.

mod contrastive;
mod objective;
mod schedule;

pub use contrastive::{cosine_sim, global_contrastive_loss, moon_loss, LossGrad};
pub use objective::{batch_objective, total_loss, BatchObjective, MoonTargets};
pub use schedule::{mu_glob_at_round, ScheduleSpec};

use crate::error::{Error, Result};

/// Temperature and loss weights in effect for one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastiveContext {
    pub tau: f64,
    pub mu_moon: f64,
    pub mu_glob: f64,
}

impl ContrastiveContext {
    pub fn new(tau: f64, mu_moon: f64, mu_glob: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::Temperature(tau));
        }
        if !(mu_moon >= 0.0) || !(mu_glob >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "loss weights must be non-negative (mu_moon={mu_moon}, mu_glob={mu_glob})"
            )));
        }
        Ok(Self { tau, mu_moon, mu_glob })
    }
}
