#![allow(dead_code)]

use fedssc::data::{batches, dirichlet_partition, LabeledDataset};
use fedssc::federation::aggregate_weights;
use fedssc::harness::{load_datasets, parse_config, TrainConfig};
use fedssc::nn::{cross_entropy, sgd_step, ModelWeights, Network};
use fedssc::seed;

pub fn pairs(kv: &[(&str, &str)]) -> Vec<(String, String)> {
    kv.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

/// A few-second synthetic federation: 4 classes, dim 8, 3 devices.
pub fn small_cfg(preset: &str, extra: &[(&str, &str)]) -> TrainConfig {
    let mut kv = pairs(&[
        ("preset", preset),
        ("dataset", "synthetic"),
        ("synth_dim", "8"),
        ("synth_per_class", "50"),
        ("synth_separation", "3"),
        ("mlp_hidden", "12"),
        ("proj_dim", "6"),
        ("devices", "3"),
        ("beta", "1"),
        ("rounds", "3"),
        ("warmup_rounds", "1"),
        ("local_epochs", "1"),
        ("batch_size", "16"),
        ("threshold", "3"),
    ]);
    kv.extend(pairs(extra));
    parse_config("", &kv).unwrap()
}

pub fn data(cfg: &TrainConfig) -> (LabeledDataset, LabeledDataset) {
    load_datasets(cfg).unwrap()
}

pub fn bits(w: &ModelWeights) -> Vec<u32> {
    w.values().map(f32::to_bits).collect()
}

/// Plain FedAvg written out from the building blocks.
pub fn reference_fedavg(cfg: &TrainConfig) -> Vec<Vec<u32>> {
    let (train, _) = data(cfg);
    let net = Network::new(cfg.architecture(train.shape(), train.num_classes())).unwrap();
    let shards = dirichlet_partition(&train, &cfg.partition()).unwrap();
    let mut global = net.init(cfg.seed);
    let mut history = Vec::new();
    for round in 0..cfg.rounds {
        let mut locals = Vec::new();
        for shard in &shards {
            let mut w = global.clone();
            let mut vel = w.zeros_like();
            for epoch in 0..cfg.local_epochs {
                let es = seed::epoch_seed(cfg.seed, shard.device_id as u64, round, epoch);
                for b in batches(shard, &train, cfg.batch_size, es).unwrap() {
                    let tr = net.forward(&w, &b.inputs).unwrap();
                    let (_, d) = cross_entropy(tr.logits(), &b.labels, train.num_classes()).unwrap();
                    let g = net.backward(&w, &tr, &d, None).unwrap();
                    sgd_step(&mut w, &g, &mut vel, cfg.sgd()).unwrap();
                }
            }
            locals.push((w, shard.len()));
        }
        let refs: Vec<(&ModelWeights, usize)> = locals.iter().map(|(w, n)| (w, *n)).collect();
        global = aggregate_weights(&refs).unwrap();
        history.push(bits(&global));
    }
    history
}
