use crate::data::{batches, ClientShard, LabeledDataset};
use crate::error::{Error, Result};
use crate::federation::bank::{classwise_reps, RepBank};
use crate::harness::TrainConfig;
use crate::losses::{batch_objective, MoonTargets};
use crate::nn::{sgd_step, Gradients, ModelWeights, Network};
use crate::seed;

/// Everything a device keeps between rounds.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub device_id: usize,
    /// Key for the device's RNG stream; the device id unless forced otherwise.
    pub seed_key: u64,
    pub shard: ClientShard,
    /// Local weights after the previous round; `None` before the first.
    pub prev_weights: Option<ModelWeights>,
    /// Optimizer momentum, kept only when velocity persistence is on.
    pub velocity: Option<Gradients>,
}

impl ClientState {
    pub fn new(shard: ClientShard) -> Self {
        Self {
            device_id: shard.device_id,
            seed_key: shard.device_id as u64,
            shard,
            prev_weights: None,
            velocity: None,
        }
    }
}

/// What a device sends to the server: its weights and its class prototypes.
/// No samples or per-sample projections leave the device.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientPayload {
    pub weights: ModelWeights,
    pub bank: RepBank,
}

/// Local bookkeeping for reports; loss components are means over batches.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClientMetrics {
    pub device_id: usize,
    pub l_class: f64,
    pub l_moon: f64,
    pub l_glob: f64,
    pub glob_skipped: usize,
    pub steps: usize,
}

/// Runs `E` local epochs from the broadcast model `w_t`, then computes the
/// device's class prototypes from the final local weights.
///
/// Per batch: `z` from the current weights, `z_glob` from the frozen `w_t`,
/// `z_prev` from the frozen previous local model (or `z_glob` in the first
/// round), and one SGD step on the combined objective.
pub fn local_training(
    net: &Network,
    train: &LabeledDataset,
    cs: &mut ClientState,
    w_t: &ModelWeights,
    zs_t: &RepBank,
    cfg: &TrainConfig,
    round: usize,
) -> Result<(ClientPayload, ClientMetrics)> {
    net.fingerprint_matches(w_t)?;
    if let Some(prev) = &cs.prev_weights {
        w_t.ensure_congruent(prev)?;
    }
    let ctx = cfg.context(round)?;
    let use_moon = ctx.mu_moon > 0.0;
    let bank = (ctx.mu_glob > 0.0 && !zs_t.is_empty()).then_some(zs_t);

    let mut w = w_t.clone();
    let mut velocity = match (cfg.persist_velocity, cs.velocity.take()) {
        (true, Some(v)) => v,
        _ => w.zeros_like(),
    };
    let mut metrics = ClientMetrics {
        device_id: cs.device_id,
        ..Default::default()
    };

    for epoch in 0..cfg.local_epochs {
        let epoch_seed = seed::epoch_seed(cfg.seed, cs.seed_key, round, epoch);
        for (batch_index, batch) in batches(&cs.shard, train, cfg.batch_size, epoch_seed)?.enumerate() {
            let trace = net.forward(&w, &batch.inputs)?;
            let frozen = if use_moon {
                let z_glob = net.forward(w_t, &batch.inputs)?.z().to_vec();
                let z_prev = match &cs.prev_weights {
                    Some(prev) => net.forward(prev, &batch.inputs)?.z().to_vec(),
                    None => z_glob.clone(),
                };
                Some((z_glob, z_prev))
            } else {
                None
            };
            let targets = frozen.as_ref().map(|(g, p)| MoonTargets { z_glob: g, z_prev: p });
            let obj = batch_objective(
                trace.logits(),
                trace.z(),
                &batch.labels,
                net.num_classes(),
                targets,
                bank,
                &ctx,
            )?;
            if !obj.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    device: cs.device_id,
                    batch: batch_index,
                    l_class: obj.l_class,
                    l_moon: obj.l_moon,
                    l_glob: obj.l_glob,
                });
            }
            let grads = net.backward(&w, &trace, &obj.d_logits, obj.d_z.as_deref())?;
            sgd_step(&mut w, &grads, &mut velocity, cfg.sgd())?;

            metrics.l_class += obj.l_class;
            metrics.l_moon += obj.l_moon;
            metrics.l_glob += obj.l_glob;
            metrics.glob_skipped += obj.glob_skipped;
            metrics.steps += 1;
        }
    }
    if metrics.steps > 0 {
        let n = metrics.steps as f64;
        metrics.l_class /= n;
        metrics.l_moon /= n;
        metrics.l_glob /= n;
    }
    if cfg.persist_velocity {
        cs.velocity = Some(velocity);
    }

    let bank = if cfg.shares_reps() {
        classwise_reps(net, &w, &cs.shard, train, cfg.threshold, round)?
    } else {
        RepBank::new(net.projection_dim(), round)
    };
    Ok((ClientPayload { weights: w, bank }, metrics))
}

impl Network {
    pub(crate) fn fingerprint_matches(&self, w: &ModelWeights) -> Result<()> {
        if w.fingerprint() == self.fingerprint() {
            Ok(())
        } else {
            Err(Error::Fingerprint {
                expected: self.fingerprint(),
                got: w.fingerprint(),
            })
        }
    }
}
