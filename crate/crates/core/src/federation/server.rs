use std::time::Instant;

use rayon::prelude::*;

use super::aggregate::aggregate_weights;
use super::bank::{aggregate_reps, RepBank};
use super::client::{local_training, ClientState};
use super::evaluate::evaluate;
use super::report::RoundReport;
use crate::data::{dirichlet_partition, LabeledDataset};
use crate::error::{Error, Result};
use crate::harness::TrainConfig;
use crate::nn::{ModelWeights, Network};

/// Environment variable capping how many clients train concurrently.
pub const THREADS_ENV: &str = "FEDSSC_THREADS";

#[derive(Debug, Clone)]
pub struct ServerState {
    pub global: ModelWeights,
    pub bank: RepBank,
    /// Rounds completed so far.
    pub round: usize,
}

/// A server and its clients over one training set.
pub struct Federation<'a> {
    net: Network,
    cfg: TrainConfig,
    train: &'a LabeledDataset,
    test: &'a LabeledDataset,
    pub server: ServerState,
    pub clients: Vec<ClientState>,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> Federation<'a> {
    /// Partitions `train` across `cfg.devices` clients and initializes the
    /// global model from the master seed with an empty prototype bank.
    pub fn new(cfg: &TrainConfig, train: &'a LabeledDataset, test: &'a LabeledDataset) -> Result<Self> {
        cfg.validate()?;
        let net = Network::new(cfg.architecture(train.shape(), train.num_classes()))?;
        let shards = dirichlet_partition(train, &cfg.partition())?;
        let clients = shards.into_iter().map(ClientState::new).collect();
        let global = net.init(cfg.seed);
        Self::with_clients(net, global, cfg, train, test, clients)
    }

    pub fn with_clients(
        net: Network,
        global: ModelWeights,
        cfg: &TrainConfig,
        train: &'a LabeledDataset,
        test: &'a LabeledDataset,
        clients: Vec<ClientState>,
    ) -> Result<Self> {
        if clients.is_empty() {
            return Err(Error::InvalidArgument("a federation needs at least one client".into()));
        }
        net.fingerprint_matches(&global)?;
        let pool = match std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
            Some(n) if n > 0 => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?,
            ),
            _ => None,
        };
        let bank = RepBank::new(net.projection_dim(), 0);
        Ok(Self {
            net,
            cfg: cfg.clone(),
            train,
            test,
            server: ServerState { global, bank, round: 0 },
            clients,
            pool,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Broadcast, parallel local training, aggregation, evaluation.
    pub fn run_round(&mut self) -> Result<RoundReport> {
        let t = self.server.round;
        if t >= self.cfg.rounds {
            return Err(Error::InvalidArgument(format!(
                "all {} rounds already completed",
                self.cfg.rounds
            )));
        }
        let started = Instant::now();
        let (net, train, cfg) = (&self.net, self.train, &self.cfg);
        let (w_t, zs_t) = (&self.server.global, &self.server.bank);

        let mut work = || {
            self.clients
                .par_iter_mut()
                .map(|cs| {
                    local_training(net, train, cs, w_t, zs_t, cfg, t).map_err(|e| Error::Client {
                        device: cs.device_id,
                        source: Box::new(e),
                    })
                })
                .collect::<Vec<_>>()
        };
        let results = match &self.pool {
            Some(pool) => pool.install(work),
            None => work(),
        };
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;

        let contributions: Vec<(&ModelWeights, usize)> = results
            .iter()
            .zip(&self.clients)
            .map(|((payload, _), cs)| (&payload.weights, cs.shard.len()))
            .collect();
        let global = aggregate_weights(&contributions)?;
        let banks: Vec<RepBank> = results.iter().map(|(p, _)| p.bank.clone()).collect();
        let bank = aggregate_reps(&banks, cfg.bank_strategy, cfg.k_samples, cfg.seed, t + 1);
        let acc = evaluate(net, &global, self.test)?;

        let p = results.len() as f64;
        let mean = |f: fn(&super::client::ClientMetrics) -> f64| results.iter().map(|(_, m)| f(m)).sum::<f64>() / p;
        let report = RoundReport {
            round: t + 1,
            acc,
            l_class: mean(|m| m.l_class),
            l_moon: mean(|m| m.l_moon),
            l_glob: mean(|m| m.l_glob),
            mu_glob: cfg.mu_glob(t),
            classes_in_bank: self.server.bank.len(),
            wall_ms: started.elapsed().as_millis() as u64,
        };

        for (cs, (payload, _)) in self.clients.iter_mut().zip(results) {
            cs.prev_weights = Some(payload.weights);
        }
        self.server = ServerState {
            global,
            bank,
            round: t + 1,
        };
        log::info!(
            "round {} acc={:.4} l_class={:.4} l_moon={:.4} l_glob={:.4}",
            report.round,
            report.acc,
            report.l_class,
            report.l_moon,
            report.l_glob
        );
        Ok(report)
    }

    /// Runs the remaining rounds.
    pub fn run(&mut self) -> Result<Vec<RoundReport>> {
        let mut reports = Vec::with_capacity(self.cfg.rounds.saturating_sub(self.server.round));
        while self.server.round < self.cfg.rounds {
            reports.push(self.run_round()?);
        }
        Ok(reports)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub reports: Vec<RoundReport>,
    pub initial_weights: ModelWeights,
    pub final_weights: ModelWeights,
    pub shard_sizes: Vec<usize>,
    pub network: Network,
}

/// Partitions, initializes and runs all `cfg.rounds` rounds.
pub fn run_experiment(cfg: &TrainConfig, train: &LabeledDataset, test: &LabeledDataset) -> Result<ExperimentOutcome> {
    let mut fed = Federation::new(cfg, train, test)?;
    let initial_weights = fed.server.global.clone();
    let shard_sizes = fed.clients.iter().map(|c| c.shard.len()).collect();
    let reports = fed.run()?;
    Ok(ExperimentOutcome {
        reports,
        initial_weights,
        final_weights: fed.server.global.clone(),
        shard_sizes,
        network: fed.net.clone(),
    })
}
