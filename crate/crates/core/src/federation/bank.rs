use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::{ClientShard, LabeledDataset};
use crate::error::{Error, Result};
use crate::nn::{ModelWeights, Network};
use crate::seed;

const EVAL_CHUNK: usize = 256;

/// One class prototype: a mean projection and where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRep {
    pub vector: Vec<f32>,
    /// Samples averaged into the vector (summed over sources after pooling).
    pub count: usize,
    pub sources: Vec<usize>,
}

impl ClassRep {
    pub fn new(vector: Vec<f32>, count: usize, sources: Vec<usize>) -> Self {
        Self {
            vector,
            count,
            sources,
        }
    }
}

/// Per-class prototypes exchanged between clients and server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepBank {
    dim: usize,
    round: usize,
    classes: BTreeMap<usize, ClassRep>,
}

impl RepBank {
    pub fn new(dim: usize, round: usize) -> Self {
        Self {
            dim,
            round,
            classes: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn get(&self, class: usize) -> Option<&ClassRep> {
        self.classes.get(&class)
    }

    /// Classes in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &ClassRep)> {
        self.classes.iter().map(|(&c, r)| (c, r))
    }

    pub fn class_ids(&self) -> Vec<usize> {
        self.classes.keys().copied().collect()
    }

    pub fn insert(&mut self, class: usize, rep: ClassRep) -> Result<()> {
        if rep.vector.len() != self.dim {
            return Err(Error::Shape {
                context: "class prototype",
                expected: self.dim.to_string(),
                got: rep.vector.len().to_string(),
            });
        }
        if rep.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("prototype for class {class} is not finite")));
        }
        self.classes.insert(class, rep);
        Ok(())
    }
}

/// Per-class mean projection under frozen weights, for every class with at
/// least `threshold` samples in the shard. Classes below it are omitted.
pub fn classwise_reps(
    net: &Network,
    w: &ModelWeights,
    shard: &ClientShard,
    ds: &LabeledDataset,
    threshold: usize,
    round: usize,
) -> Result<RepBank> {
    let dim = net.projection_dim();
    let mut bank = RepBank::new(dim, round);
    let eligible: Vec<bool> = shard.class_counts.iter().map(|&c| c > 0 && c >= threshold).collect();
    let members: Vec<usize> = shard
        .indices
        .iter()
        .copied()
        .filter(|&i| eligible[ds.label(i)])
        .collect();
    if members.is_empty() {
        return Ok(bank);
    }

    let mut sums = vec![vec![0.0f64; dim]; ds.num_classes()];
    for chunk in members.chunks(EVAL_CHUNK) {
        let (inputs, labels) = ds.gather(chunk);
        let trace = net.forward(w, &inputs)?;
        for (row, &label) in labels.iter().enumerate() {
            for (s, &v) in sums[label].iter_mut().zip(trace.z_row(row)) {
                *s += v as f64;
            }
        }
    }
    for (class, sum) in sums.into_iter().enumerate() {
        if !eligible[class] {
            continue;
        }
        let n = shard.class_counts[class];
        let vector = sum.into_iter().map(|s| (s / n as f64) as f32).collect();
        bank.insert(class, ClassRep::new(vector, n, vec![shard.device_id]))?;
    }
    Ok(bank)
}

/// How the server pools the clients' prototypes for each class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankStrategy {
    /// Average `k` randomly chosen client prototypes (all of them if fewer).
    SampleK,
    /// Take one randomly chosen client's prototype.
    SingleRandom,
    /// Average every client prototype.
    MeanAll,
}

impl fmt::Display for BankStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BankStrategy::SampleK => "sample_k",
            BankStrategy::SingleRandom => "single_random",
            BankStrategy::MeanAll => "mean_all",
        })
    }
}

impl FromStr for BankStrategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sample_k" => Ok(BankStrategy::SampleK),
            "single_random" => Ok(BankStrategy::SingleRandom),
            "mean_all" => Ok(BankStrategy::MeanAll),
            _ => Err(format!("unknown bank strategy `{s}` (sample_k | single_random | mean_all)")),
        }
    }
}

/// Pools client banks into the bank broadcast next round.
///
/// `banks` must be in device order; sampling is seeded by `(seed, round)`.
pub fn aggregate_reps(banks: &[RepBank], strategy: BankStrategy, k_samples: usize, seed: u64, round: usize) -> RepBank {
    let Some(first) = banks.first() else {
        return RepBank::new(0, round);
    };
    let dim = first.dim();
    let mut rng = seed::rng(seed::derive(seed, &[seed::STREAM_BANK, round as u64]));
    let mut by_class: BTreeMap<usize, Vec<&ClassRep>> = BTreeMap::new();
    for bank in banks {
        for (class, rep) in bank.iter() {
            by_class.entry(class).or_default().push(rep);
        }
    }

    let mut out = RepBank::new(dim, round);
    for (class, reps) in by_class {
        let take = match strategy {
            BankStrategy::SampleK => k_samples.max(1).min(reps.len()),
            BankStrategy::SingleRandom => 1,
            BankStrategy::MeanAll => reps.len(),
        };
        let chosen: Vec<&ClassRep> = if take == reps.len() {
            reps
        } else {
            let mut picked = index::sample(&mut rng, reps.len(), take).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| reps[i]).collect()
        };
        let mut sum = vec![0.0f64; dim];
        for rep in &chosen {
            for (s, &v) in sum.iter_mut().zip(&rep.vector) {
                *s += v as f64;
            }
        }
        let n = chosen.len() as f64;
        let rep = ClassRep::new(
            sum.into_iter().map(|s| (s / n) as f32).collect(),
            chosen.iter().map(|r| r.count).sum(),
            chosen.iter().flat_map(|r| r.sources.iter().copied()).collect(),
        );
        out.insert(class, rep).expect("averages of finite prototypes are finite");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;
    use crate::nn::{ModelArchitecture, Shape3};

    fn bank_of(device: usize, entries: &[(usize, [f32; 2])]) -> RepBank {
        let mut b = RepBank::new(2, 3);
        for (c, v) in entries {
            b.insert(*c, ClassRep::new(v.to_vec(), 10, vec![device])).unwrap();
        }
        b
    }

    #[test]
    fn single_bank_passes_through() {
        let b = bank_of(4, &[(0, [1.0, 2.0]), (2, [0.5, -1.0])]);
        for strategy in [BankStrategy::SampleK, BankStrategy::SingleRandom, BankStrategy::MeanAll] {
            let out = aggregate_reps(std::slice::from_ref(&b), strategy, 3, 1, 3);
            assert_eq!(out, b, "{strategy}");
        }
    }

    #[test]
    fn mean_all_averages() {
        let a = bank_of(0, &[(1, [1.0, 0.0])]);
        let b = bank_of(1, &[(1, [0.0, 1.0])]);
        let out = aggregate_reps(&[a, b], BankStrategy::MeanAll, 0, 0, 3);
        assert_eq!(out.get(1).unwrap().vector, vec![0.5, 0.5]);
        assert_eq!(out.get(1).unwrap().sources, vec![0, 1]);
    }

    #[test]
    fn sample_one_is_reproducible_single_source() {
        let banks: Vec<RepBank> = (0..6)
            .map(|d| bank_of(d, &[(0, [d as f32, 1.0]), (1, [1.0, d as f32])]))
            .collect();
        let a = aggregate_reps(&banks, BankStrategy::SampleK, 1, 42, 7);
        for (_, rep) in a.iter() {
            assert_eq!(rep.sources.len(), 1);
        }
        for _ in 0..5 {
            assert_eq!(aggregate_reps(&banks, BankStrategy::SampleK, 1, 42, 7), a);
        }
    }

    #[test]
    fn sample_k_falls_back_to_everything() {
        let a = bank_of(0, &[(0, [1.0, 0.0])]);
        let b = bank_of(1, &[(0, [0.0, 1.0]), (1, [2.0, 2.0])]);
        let out = aggregate_reps(&[a, b], BankStrategy::SampleK, 5, 0, 0);
        assert_eq!(out.get(0).unwrap().vector, vec![0.5, 0.5]);
        assert_eq!(out.get(1).unwrap().sources, vec![1]);
    }

    #[test]
    fn empty_input_gives_empty_bank() {
        assert!(aggregate_reps(&[], BankStrategy::MeanAll, 1, 0, 0).is_empty());
    }

    #[test]
    fn insert_checks_dimension() {
        let mut b = RepBank::new(3, 0);
        assert!(b.insert(0, ClassRep::new(vec![1.0], 1, vec![])).is_err());
        assert!(b.insert(0, ClassRep::new(vec![f32::NAN; 3], 1, vec![])).is_err());
    }

    #[test]
    fn strategy_round_trips_through_text() {
        for s in [BankStrategy::SampleK, BankStrategy::SingleRandom, BankStrategy::MeanAll] {
            assert_eq!(s.to_string().parse::<BankStrategy>().unwrap(), s);
        }
        assert!("nope".parse::<BankStrategy>().is_err());
    }

    fn identity_net() -> (Network, ModelWeights) {
        // 2-d input, one hidden unit layer of width 2, projection 2-2; weights set
        // so the projection of a non-negative input is the input itself.
        let net = Network::new(ModelArchitecture::mlp(2, &[2], 2, 2)).unwrap();
        let mut w = net.zeros();
        for t in w.tensors_mut() {
            if t.name.ends_with(".weight") && t.shape == vec![2, 2] {
                t.data = vec![1.0, 0.0, 0.0, 1.0];
            }
        }
        (net, w)
    }

    fn dataset(rows: &[([f32; 2], usize)]) -> LabeledDataset {
        LabeledDataset::new(
            Shape3::flat(2),
            rows.iter().flat_map(|(x, _)| x.iter().copied()).collect(),
            rows.iter().map(|(_, y)| *y).collect(),
            2,
            Provenance::Synthetic,
        )
        .unwrap()
    }

    #[test]
    fn two_point_mean() {
        let (net, w) = identity_net();
        let ds = dataset(&[([1.0, 0.0], 1), ([0.0, 1.0], 1)]);
        let shard = ClientShard::new(5, vec![0, 1], &ds);
        let bank = classwise_reps(&net, &w, &shard, &ds, 1, 0).unwrap();
        assert_eq!(bank.class_ids(), vec![1]);
        assert_eq!(bank.get(1).unwrap().vector, vec![0.5, 0.5]);
        assert_eq!(bank.get(1).unwrap().sources, vec![5]);
    }

    #[test]
    fn threshold_excludes_small_classes() {
        let (net, w) = identity_net();
        let mut rows = vec![([0.3, 0.7], 0); 9];
        rows.extend(vec![([0.2, 0.1], 1); 10]);
        let ds = dataset(&rows);
        let shard = ClientShard::new(0, (0..19).collect(), &ds);
        let bank = classwise_reps(&net, &w, &shard, &ds, 10, 0).unwrap();
        assert_eq!(bank.class_ids(), vec![1]);
        let sample = net.forward(&w, ds.sample(9)).unwrap();
        assert_eq!(bank.get(1).unwrap().vector, sample.z_row(0));
    }
}
