mod common;

use std::collections::BTreeSet;

use fedssc::data::{
    batches, dirichlet_partition, heterogeneity, load_cifar10, load_cifar10_file, make_synthetic, read_synthetic,
    write_cifar10_file, write_synthetic, LabeledDataset, PartitionSpec, Provenance, SyntheticSpec,
};
use fedssc::nn::Shape3;
use proptest::prelude::*;

fn labeled(n: usize, classes: usize, seed: u64) -> LabeledDataset {
    use rand::Rng;
    let mut rng = fedssc::seed::rng(seed);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    LabeledDataset::new(Shape3::flat(1), vec![0.0; n], labels, classes, Provenance::Synthetic).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn partition_is_a_disjoint_cover(
        n in 50usize..400, classes in 2usize..8, devices in 1usize..10,
        beta in 0.1..10.0f64, seed in any::<u64>(),
    ) {
        let ds = labeled(n, classes, seed);
        let spec = PartitionSpec { beta, devices, seed, equalize: false };
        let shards = match dirichlet_partition(&ds, &spec) {
            Ok(s) => s,
            // Tiny β can concentrate every class on a few devices; that is a
            // reported failure, not a silent bad partition.
            Err(fedssc::Error::Partition(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert_eq!(shards.len(), devices);
        let mut seen = BTreeSet::new();
        for (d, s) in shards.iter().enumerate() {
            prop_assert_eq!(s.device_id, d);
            prop_assert!(!s.indices.is_empty());
            prop_assert!(s.indices.windows(2).all(|w| w[0] < w[1]));
            let mut counts = vec![0; classes];
            for &i in &s.indices {
                prop_assert!(seen.insert(i), "index {} twice", i);
                counts[ds.label(i)] += 1;
            }
            prop_assert_eq!(&counts, &s.class_counts);
        }
        prop_assert_eq!(seen.len(), n);
        // Same inputs, same partition.
        let again = dirichlet_partition(&ds, &spec).unwrap();
        prop_assert!(shards.iter().zip(&again).all(|(a, b)| a.indices == b.indices));
    }

    #[test]
    fn equalized_shards_have_equal_size(seed in any::<u64>(), beta in 0.5..5.0f64) {
        let ds = labeled(300, 4, seed);
        let spec = PartitionSpec { beta, devices: 5, seed, equalize: true };
        let shards = dirichlet_partition(&ds, &spec).unwrap();
        let sizes: BTreeSet<usize> = shards.iter().map(|s| s.len()).collect();
        prop_assert_eq!(sizes.len(), 1);
    }
}

#[test]
fn heterogeneity_falls_as_beta_grows() {
    let ds = labeled(2000, 10, 1);
    let mean_at = |beta: f64| {
        (0..5)
            .map(|seed| {
                let spec = PartitionSpec { beta, devices: 10, seed, equalize: false };
                heterogeneity(&dirichlet_partition(&ds, &spec).unwrap(), &ds)
            })
            .sum::<f64>()
            / 5.0
    };
    let h: Vec<f64> = [0.1, 0.5, 1.0, 5.0, 100.0].iter().map(|&b| mean_at(b)).collect();
    assert!(h.windows(2).all(|w| w[0] > w[1]), "{h:?}");
}

#[test]
fn batches_cover_the_shard_once_per_epoch() {
    let ds = labeled(103, 3, 4);
    let shard = fedssc::data::ClientShard::new(0, (0..103).step_by(2).collect(), &ds);
    let got: Vec<usize> = batches(&shard, &ds, 10, 77).unwrap().map(|b| b.labels.len()).collect();
    assert_eq!(got, vec![10, 10, 10, 10, 10, 2]);
    let a: Vec<Vec<usize>> = batches(&shard, &ds, 10, 77).unwrap().map(|b| b.labels).collect();
    let b: Vec<Vec<usize>> = batches(&shard, &ds, 10, 77).unwrap().map(|b| b.labels).collect();
    assert_eq!(a, b);
}

fn cifar_like(n: usize) -> LabeledDataset {
    // Values on the 0..=255 grid after normalization, as real records produce.
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("raw.bin");
    let mut bytes = Vec::new();
    for i in 0..n {
        bytes.push((i % 10) as u8);
        bytes.extend((0..3072).map(|j| ((i * 31 + j * 7) % 256) as u8));
    }
    std::fs::write(&path, bytes).unwrap();
    load_cifar10_file(&path).unwrap()
}

#[test]
fn cifar_shard_round_trips_through_the_binary_format() {
    let ds = cifar_like(40);
    let spec = PartitionSpec { beta: 0.5, devices: 3, seed: 2, equalize: false };
    let shard = &dirichlet_partition(&ds, &spec).unwrap()[1];
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("shard.bin");
    write_cifar10_file(&path, &ds, &shard.indices).unwrap();
    let back = load_cifar10_file(&path).unwrap();
    assert_eq!(back.len(), shard.len());
    for (k, &i) in shard.indices.iter().enumerate() {
        assert_eq!(back.label(k), ds.label(i));
        assert_eq!(back.sample(k), ds.sample(i));
    }
}

#[test]
fn synthetic_file_round_trips() {
    let spec = SyntheticSpec { classes: 3, dim: 5, per_class: 20, separation: 2.0, seed: 8 };
    let (train, _) = make_synthetic(&spec).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("train.fssc");
    write_synthetic(&path, &train).unwrap();
    let back = read_synthetic(&path).unwrap();
    assert_eq!(back.labels(), train.labels());
    assert_eq!(back.features(), train.features());
    assert_eq!(back.num_classes(), 3);
}

#[test]
fn identical_clusters_leave_only_chance_accuracy() {
    let cfg = common::small_cfg(
        "fedavg",
        &[("synth_separation", "0"), ("synth_per_class", "200"), ("devices", "1"), ("rounds", "1"), ("local_epochs", "5")],
    );
    let (train, test) = common::data(&cfg);
    let acc = fedssc::federation::run_experiment(&cfg, &train, &test).unwrap().reports[0].acc;
    assert!((acc - 0.25).abs() <= 0.1, "accuracy {acc}");
}

/// Needs the real binary batches; set FEDSSC_CIFAR_DIR to run.
#[test]
fn real_cifar10_loads_when_available() {
    let Ok(dir) = std::env::var("FEDSSC_CIFAR_DIR") else {
        eprintln!("FEDSSC_CIFAR_DIR not set; skipping");
        return;
    };
    let (train, test) = load_cifar10(dir).unwrap();
    assert_eq!((train.len(), test.len()), (50_000, 10_000));
    assert_eq!(train.class_counts(), vec![5000; 10]);
    let mean: f64 = train.features().iter().map(|&v| v as f64).sum::<f64>() / train.features().len() as f64;
    assert!(mean.abs() < 0.05, "normalized mean {mean}");
}
