use rand::seq::SliceRandom;

use super::dataset::LabeledDataset;
use super::partition::ClientShard;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<f32>,
    pub labels: Vec<usize>,
}

/// Consecutive batches over a seeded shuffle of a shard; the last may be short.
#[derive(Debug, Clone)]
pub struct Batches<'a> {
    ds: &'a LabeledDataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

pub fn batches<'a>(
    shard: &ClientShard,
    ds: &'a LabeledDataset,
    batch_size: usize,
    epoch_seed: u64,
) -> Result<Batches<'a>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    if shard.is_empty() {
        return Err(Error::InvalidArgument(format!("shard of device {} is empty", shard.device_id)));
    }
    let mut order = shard.indices.clone();
    order.shuffle(&mut seed::rng(epoch_seed));
    Ok(Batches {
        ds,
        order,
        batch_size,
        pos: 0,
    })
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let (inputs, labels) = self.ds.gather(&self.order[self.pos..end]);
        self.pos = end;
        Some(Batch { inputs, labels })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.order.len() - self.pos).div_ceil(self.batch_size);
        (n, Some(n))
    }
}

impl ExactSizeIterator for Batches<'_> {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;
    use crate::nn::Shape3;

    fn fixture() -> (LabeledDataset, ClientShard) {
        let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let features: Vec<f32> = (0..12).map(|i| i as f32).collect();
        let ds = LabeledDataset::new(Shape3::flat(1), features, labels, 3, Provenance::Synthetic).unwrap();
        let shard = ClientShard::new(0, (2..12).collect(), &ds);
        (ds, shard)
    }

    #[test]
    fn batch_sizes_split() {
        let (ds, shard) = fixture();
        let sizes: Vec<usize> = batches(&shard, &ds, 4, 1).unwrap().map(|b| b.labels.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn seeded_order_is_reproducible() {
        let (ds, shard) = fixture();
        let a: Vec<Batch> = batches(&shard, &ds, 3, 5).unwrap().collect();
        let b: Vec<Batch> = batches(&shard, &ds, 3, 5).unwrap().collect();
        assert_eq!(a, b);
    }

    #[test]
    fn emits_a_permutation_of_the_shard() {
        let (ds, shard) = fixture();
        let mut seen: Vec<usize> = batches(&shard, &ds, 3, 8)
            .unwrap()
            .flat_map(|b| b.inputs.into_iter().map(|v| v as usize))
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, shard.indices);
    }

    #[test]
    fn empty_shard_rejected() {
        let (ds, _) = fixture();
        let empty = ClientShard::new(3, vec![], &ds);
        assert!(batches(&empty, &ds, 4, 0).is_err());
        let (ds, shard) = fixture();
        assert!(batches(&shard, &ds, 0, 0).is_err());
    }
}
