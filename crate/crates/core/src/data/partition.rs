use rand::seq::{index, SliceRandom};
use rand_distr::{Distribution, Gamma};

use super::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::seed;

const MAX_ATTEMPTS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionSpec {
    /// Dirichlet concentration; smaller means more skewed shards.
    pub beta: f64,
    pub devices: usize,
    pub seed: u64,
    /// Truncate every shard to the smallest shard size.
    pub equalize: bool,
}

/// One device's slice of the training set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientShard {
    pub device_id: usize,
    /// Sorted, unique indices into the parent dataset.
    pub indices: Vec<usize>,
    pub class_counts: Vec<usize>,
}

impl ClientShard {
    pub fn new(device_id: usize, mut indices: Vec<usize>, ds: &LabeledDataset) -> Self {
        indices.sort_unstable();
        indices.dedup();
        let mut class_counts = vec![0; ds.num_classes()];
        for &i in &indices {
            class_counts[ds.label(i)] += 1;
        }
        Self {
            device_id,
            indices,
            class_counts,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Splits `n` items by `proportions`, rounding with the largest-remainder
/// method so the parts sum to `n` exactly. Ties go to the lower index.
fn largest_remainder(n: usize, proportions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = proportions.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn draw_dirichlet(gamma: &Gamma<f64>, devices: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..devices).map(|_| gamma.sample(rng)).collect();
        let total: f64 = g.iter().sum();
        if total > 0.0 && total.is_finite() {
            return g.into_iter().map(|x| x / total).collect();
        }
    }
}

/// For each class, draws device proportions from a symmetric Dirichlet(β)
/// and deals that class's (shuffled) samples out accordingly.
///
/// Retries with a fresh draw while any device ends up empty.
pub fn dirichlet_partition(ds: &LabeledDataset, spec: &PartitionSpec) -> Result<Vec<ClientShard>> {
    if ds.is_empty() {
        return Err(Error::Partition("dataset is empty".into()));
    }
    if !(spec.beta > 0.0) || spec.devices == 0 {
        return Err(Error::Partition(format!(
            "need beta > 0 and at least one device (beta={}, devices={})",
            spec.beta, spec.devices
        )));
    }
    let gamma = Gamma::new(spec.beta, 1.0).map_err(|e| Error::Partition(e.to_string()))?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes()];
    for (i, &l) in ds.labels().iter().enumerate() {
        by_class[l].push(i);
    }

    let mut smallest = 0;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = seed::rng(seed::derive(spec.seed, &[seed::STREAM_PARTITION, attempt]));
        let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); spec.devices];
        for members in &by_class {
            let mut members = members.clone();
            members.shuffle(&mut rng);
            let props = draw_dirichlet(&gamma, spec.devices, &mut rng);
            let counts = largest_remainder(members.len(), &props);
            let mut start = 0;
            for (dev, c) in counts.into_iter().enumerate() {
                assigned[dev].extend_from_slice(&members[start..start + c]);
                start += c;
            }
        }
        smallest = assigned.iter().map(Vec::len).min().unwrap_or(0);
        if smallest == 0 {
            continue;
        }
        if spec.equalize {
            for a in &mut assigned {
                let keep = index::sample(&mut rng, a.len(), smallest);
                *a = keep.into_iter().map(|i| a[i]).collect();
            }
        }
        return Ok(assigned
            .into_iter()
            .enumerate()
            .map(|(dev, idx)| ClientShard::new(dev, idx, ds))
            .collect());
    }
    Err(Error::Partition(format!(
        "some device stayed empty after {MAX_ATTEMPTS} draws (N={}, devices={}, beta={}, last smallest shard={smallest})",
        ds.len(),
        spec.devices,
        spec.beta
    )))
}

/// Mean over devices of the L1 distance between the device's class
/// distribution and the dataset's.
pub fn heterogeneity(shards: &[ClientShard], ds: &LabeledDataset) -> f64 {
    let global = ds.class_counts();
    let n = ds.len() as f64;
    let total: f64 = shards
        .iter()
        .map(|s| {
            let ni = s.len() as f64;
            s.class_counts
                .iter()
                .zip(&global)
                .map(|(&c, &g)| (c as f64 / ni - g as f64 / n).abs())
                .sum::<f64>()
        })
        .sum();
    total / shards.len() as f64
}
