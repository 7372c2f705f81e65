use fedssc::harness::verify::{gradcheck_architectures, layer_errors, FD_EPS, LAYER_TOL};
use fedssc::harness::{load_datasets, parse_config};
use fedssc::data::{batches, ClientShard};
use fedssc::nn::{cross_entropy, sgd_step, ModelArchitecture, Network, ParamSet, SgdParams};
use rand::Rng;

#[test]
fn every_layer_matches_finite_differences_over_ten_seeds() {
    for (label, arch, batch) in gradcheck_architectures() {
        let mut probed = 0;
        let mut skipped = 0;
        for s in 0..10 {
            let report = layer_errors(&arch, batch, s, FD_EPS).unwrap();
            probed += report.probed;
            skipped += report.skipped;
            for (tensor, err, compared) in report.tensors {
                assert!(compared > 0, "{label} seed {s}: no usable probe for {tensor}");
                assert!(err < LAYER_TOL, "{label} seed {s} {tensor}: relative error {err:e}");
            }
        }
        assert!(skipped * 100 <= probed, "{label}: {skipped}/{probed} probes at kinks");
    }
}

#[test]
fn lenet_gradients_with_small_step() {
    let arch = ModelArchitecture::lenet(10);
    for s in 0..2 {
        let report = layer_errors(&arch, 2, s, 1e-6).unwrap();
        for (tensor, err, compared) in report.tensors {
            assert!(compared > 0, "seed {s}: no usable probe for {tensor}");
            assert!(err < LAYER_TOL, "seed {s} {tensor}: relative error {err:e}");
        }
    }
}

#[test]
fn batched_forward_matches_single_samples() {
    let net = Network::new(ModelArchitecture::lenet(10)).unwrap();
    let w = net.init(3);
    let mut rng = fedssc::seed::rng(11);
    let n = net.input_size();
    let x: Vec<f32> = (0..64 * n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let full = net.forward(&w, &x).unwrap();
    for i in 0..64 {
        let one = net.forward(&w, &x[i * n..(i + 1) * n]).unwrap();
        for (a, b) in one.logits().iter().zip(full.logits_row(i)) {
            assert!((a - b).abs() <= 1e-6, "row {i}: {a} vs {b}");
        }
        for (a, b) in one.z().iter().zip(full.z_row(i)) {
            assert!((a - b).abs() <= 1e-6, "row {i}: {a} vs {b}");
        }
    }
}

#[test]
fn sgd_decreases_a_convex_loss() {
    // With the projection frozen, cross-entropy is convex in the classifier.
    let net = Network::new(ModelArchitecture::mlp(4, &[], 3, 3)).unwrap();
    let mut w = net.init(1);
    let mut rng = fedssc::seed::rng(5);
    let x: Vec<f32> = (0..32 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels: Vec<usize> = (0..32).map(|i| i % 3).collect();
    let mut vel = net.zeros();
    let p = SgdParams { lr: 0.05, momentum: 0.0, weight_decay: 0.0 };
    let mut losses = Vec::new();
    for _ in 0..50 {
        let tr = net.forward(&w, &x).unwrap();
        let (loss, d) = cross_entropy(tr.logits(), &labels, 3).unwrap();
        losses.push(loss);
        let mut g = net.backward(&w, &tr, &d, None).unwrap();
        for t in g.tensors_mut().iter_mut().filter(|t| !t.name.starts_with("classifier")) {
            t.data.fill(0.0);
        }
        sgd_step(&mut w, &g, &mut vel, p).unwrap();
    }
    for (i, pair) in losses.windows(2).enumerate() {
        assert!(pair[1] <= pair[0] + 1e-7, "step {i}: {} > {}", pair[1], pair[0]);
    }
    assert!(losses[49] < losses[0]);
}

#[test]
fn hundred_steps_stay_finite() {
    let kv = [("dataset", "synthetic"), ("synth_per_class", "100")];
    let cfg = parse_config("", &kv.map(|(k, v)| (k.to_string(), v.to_string()))).unwrap();
    let (train, _) = load_datasets(&cfg).unwrap();
    let net = Network::new(cfg.architecture(train.shape(), train.num_classes())).unwrap();
    let mut w = net.init(0);
    let mut vel = w.zeros_like();
    let shard = ClientShard::new(0, (0..train.len()).collect(), &train);
    let mut steps = 0;
    'outer: for epoch in 0..100 {
        for b in batches(&shard, &train, 64, epoch).unwrap() {
            let tr = net.forward(&w, &b.inputs).unwrap();
            let (_, d) = cross_entropy(tr.logits(), &b.labels, train.num_classes()).unwrap();
            let g = net.backward(&w, &tr, &d, None).unwrap();
            sgd_step(&mut w, &g, &mut vel, cfg.sgd()).unwrap();
            assert!(w.all_finite(), "non-finite weight after step {steps}");
            steps += 1;
            if steps == 100 {
                break 'outer;
            }
        }
    }
    assert_eq!(steps, 100);
}

#[test]
fn f32_and_f64_forward_agree() {
    let net = Network::new(ModelArchitecture::mlp(5, &[7], 4, 3)).unwrap();
    let w = net.init(9);
    let w64: ParamSet<f64> = w.cast();
    let x: Vec<f32> = (0..10).map(|i| i as f32 * 0.3 - 1.0).collect();
    let x64: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let a = net.forward(&w, &x).unwrap();
    let b = net.forward(&w64, &x64).unwrap();
    for (u, v) in a.logits().iter().zip(b.logits()) {
        assert!((*u as f64 - v).abs() < 1e-5);
    }
}
