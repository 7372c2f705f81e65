//! Built-in oracle suite behind the `verify` subcommand.
//!
//! The loss oracles here are written directly from the formulas with plain
//! loops and share no code with [`crate::losses`].

use std::time::Instant;

use rand::Rng;

use crate::federation::{ClassRep, RepBank};
use crate::losses::{batch_objective, global_contrastive_loss, moon_loss, ContrastiveContext, MoonTargets};
use crate::nn::gradcheck::relative_error;
use crate::nn::{cross_entropy, sgd_step, LayerSpec, ModelArchitecture, Network, ParamSet, SgdParams, Shape3};
use crate::seed;

pub const FD_EPS: f64 = 1e-3;
pub const LAYER_TOL: f64 = 1e-3;
pub const LOSS_TOL: f64 = 1e-4;
pub const ORACLE_TOL: f64 = 1e-5;
pub const TRIVIAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub millis: u128,
}

fn timed(name: &str, f: impl FnOnce() -> Result<String, String>) -> Check {
    let start = Instant::now();
    let result = f();
    let millis = start.elapsed().as_millis();
    match result {
        Ok(detail) => Check { name: name.into(), passed: true, detail, millis },
        Err(detail) => Check { name: name.into(), passed: false, detail, millis },
    }
}

fn oracle_cos(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    dot / (na.sqrt() * nb.sqrt())
}

fn oracle_moon(z: &[f64], zg: &[f64], zp: &[f64], tau: f64) -> f64 {
    let pos = (oracle_cos(z, zg) / tau).exp();
    let neg = (oracle_cos(z, zp) / tau).exp();
    -(pos / (pos + neg)).ln()
}

fn oracle_glob(z: &[f64], label: usize, protos: &[(usize, Vec<f64>)], tau: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (class, p) in protos {
        let e = (oracle_cos(z, p) / tau).exp();
        den += e;
        if *class == label {
            num = e;
        }
    }
    -(num / den).ln()
}

fn random_vec(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Random bank with prototypes rounded to `f32`, as stored.
fn random_bank(rng: &mut impl Rng, dim: usize, classes: &[usize]) -> (RepBank, Vec<(usize, Vec<f64>)>) {
    let mut bank = RepBank::new(dim, 0);
    let mut protos = Vec::new();
    for &c in classes {
        let v: Vec<f32> = random_vec(rng, dim).iter().map(|&x| x as f32).collect();
        protos.push((c, v.iter().map(|&x| x as f64).collect()));
        bank.insert(c, ClassRep::new(v, 10, vec![0])).expect("finite prototype");
    }
    (bank, protos)
}

/// Both contrastive losses against the scripted oracles on `sets` random
/// vector sets, plus the two closed-form cases.
pub fn loss_oracles(sets: usize, master: u64) -> Check {
    timed("loss oracles", || {
        let mut rng = seed::rng(master);
        let mut worst: f64 = 0.0;
        for s in 0..sets {
            let dim = rng.random_range(2..=32);
            let tau = rng.random_range(0.05..2.0);
            let z = random_vec(&mut rng, dim);
            let zg = random_vec(&mut rng, dim);
            let zp = random_vec(&mut rng, dim);
            let got = moon_loss(&z, &zg, &zp, tau).map_err(|e| e.to_string())?.value;
            worst = worst.max((got - oracle_moon(&z, &zg, &zp, tau)).abs());

            let n = rng.random_range(1..=10);
            let classes: Vec<usize> = (0..n).map(|i| i * 2 + rng.random_range(0..2)).collect();
            let label = classes[rng.random_range(0..n)];
            let (bank, protos) = random_bank(&mut rng, dim, &classes);
            let got = global_contrastive_loss(&z, label, &bank, tau)
                .map_err(|e| e.to_string())?
                .ok_or(format!("set {s}: present class reported absent"))?
                .value;
            worst = worst.max((got - oracle_glob(&z, label, &protos, tau)).abs());
        }
        if worst >= ORACLE_TOL {
            return Err(format!("max abs error {worst:.3e} >= {ORACLE_TOL:e}"));
        }

        let z = random_vec(&mut rng, 16);
        let zg = random_vec(&mut rng, 16);
        let sym = moon_loss(&z, &zg, &zg, 0.5).map_err(|e| e.to_string())?.value;
        if (sym - std::f64::consts::LN_2).abs() >= TRIVIAL_TOL {
            return Err(format!("symmetric moon loss {sym} != ln 2"));
        }
        let (bank, _) = random_bank(&mut rng, 16, &[3]);
        let single = global_contrastive_loss(&z, 3, &bank, 0.5).map_err(|e| e.to_string())?.map_or(f64::NAN, |g| g.value);
        if single.abs() >= TRIVIAL_TOL {
            return Err(format!("single-class loss {single} != 0"));
        }
        Ok(format!("{sets} sets, max abs error {worst:.2e}"))
    })
}

fn fd_vector(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + FD_EPS;
            let up = f(&probe);
            probe[i] = x[i] - FD_EPS;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * FD_EPS)
        })
        .collect()
}

/// Analytic gradients of both losses with respect to `z` against central
/// differences.
pub fn loss_gradients(seeds: u64) -> Check {
    timed("loss gradients", || {
        let mut worst: f64 = 0.0;
        for s in 0..seeds {
            let mut rng = seed::rng(seed::derive(s, &[0x10]));
            let dim = 8;
            let tau = 0.5;
            let z = random_vec(&mut rng, dim);
            let zg = random_vec(&mut rng, dim);
            let zp = random_vec(&mut rng, dim);
            let moon = moon_loss(&z, &zg, &zp, tau).map_err(|e| e.to_string())?;
            let num = fd_vector(&z, |v| moon_loss(v, &zg, &zp, tau).map_or(f64::NAN, |l| l.value));
            worst = worst.max(relative_error(&moon.grad, &num));

            let (bank, _) = random_bank(&mut rng, dim, &[0, 1, 2, 4]);
            let glob = global_contrastive_loss(&z, 2, &bank, tau).map_err(|e| e.to_string())?.ok_or("class absent")?;
            let num = fd_vector(&z, |v| {
                global_contrastive_loss(v, 2, &bank, tau).ok().flatten().map_or(f64::NAN, |l| l.value)
            });
            worst = worst.max(relative_error(&glob.grad, &num));
        }
        if !(worst < LOSS_TOL) {
            return Err(format!("max relative error {worst:.3e} >= {LOSS_TOL:e}"));
        }
        Ok(format!("{seeds} seeds, max relative error {worst:.2e}"))
    })
}

/// Small architectures covering every layer kind. Wide convolutional stacks
/// have so many rectifiers that a step of [`FD_EPS`] almost always crosses
/// one, so they need a smaller step.
pub fn gradcheck_architectures() -> Vec<(&'static str, ModelArchitecture, usize)> {
    let conv = ModelArchitecture {
        input: Shape3::new(2, 7, 7),
        encoder: vec![
            LayerSpec::Conv2d { out_channels: 3, kernel: 3, stride: 1 },
            LayerSpec::Relu,
            LayerSpec::MaxPool { size: 2, stride: 2 },
            LayerSpec::Conv2d { out_channels: 2, kernel: 2, stride: 2 },
            LayerSpec::Relu,
            LayerSpec::Linear { out_features: 5 },
        ],
        projection: vec![LayerSpec::Linear { out_features: 4 }, LayerSpec::Relu, LayerSpec::Linear { out_features: 4 }],
        num_classes: 3,
    };
    vec![("mlp", ModelArchitecture::mlp(6, &[5, 4], 3, 3), 4), ("small conv", conv, 3)]
}

/// Coordinates probed per tensor; `None` probes all of them.
fn coords_per_tensor(params: usize) -> Option<usize> {
    (params > 2_000).then_some(12)
}

#[derive(Debug, Clone)]
pub struct LayerErrors {
    /// Relative error and compared-probe count per tensor.
    pub tensors: Vec<(String, f64, usize)>,
    pub probed: usize,
    /// Probes that disagree and whose two sides took different rectifier or
    /// pool branches, where central differences are invalid.
    pub skipped: usize,
}

/// Per-tensor relative errors of the full training objective (cross-entropy,
/// MOON and class-wise terms) for one architecture and seed.
pub fn layer_errors(arch: &ModelArchitecture, batch: usize, s: u64, eps: f64) -> Result<LayerErrors, String> {
    let net = Network::new(arch.clone()).map_err(|e| e.to_string())?;
    let c = net.num_classes();
    let d = net.projection_dim();
    let mut w: ParamSet<f64> = net.init(seed::derive(s, &[0x20])).cast();
    let mut rng = seed::rng(seed::derive(s, &[0x21]));
    // Nonzero biases keep z away from the origin, where the curvature of the
    // cosine similarity is too large for the finite-difference step.
    for t in w.tensors_mut().iter_mut().filter(|t| t.name.ends_with(".bias")) {
        t.data.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    }

    // Redraw inputs a few times to keep rectifiers and pools away from kinks.
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..8 {
        let x: Vec<f64> = (0..batch * net.input_size()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let margin = net.kink_margin(&net.forward(&w, &x).map_err(|e| e.to_string())?);
        if best.as_ref().is_none_or(|(m, _)| margin > *m) {
            best = Some((margin, x));
        }
    }
    let x = best.expect("at least one draw").1;
    let labels: Vec<usize> = (0..batch).map(|i| i % c).collect();
    let zg: Vec<f64> = random_vec(&mut rng, batch * d);
    let zp: Vec<f64> = random_vec(&mut rng, batch * d);
    let classes: Vec<usize> = (0..c).collect();
    let (bank, _) = random_bank(&mut rng, d, &classes);
    let ctx = ContrastiveContext::new(0.5, 5.0, 1.0).map_err(|e| e.to_string())?;

    let objective = |w: &ParamSet<f64>| -> Result<_, String> {
        let trace = net.forward(w, &x).map_err(|e| e.to_string())?;
        let moon = MoonTargets { z_glob: &zg, z_prev: &zp };
        let obj = batch_objective(trace.logits(), trace.z(), &labels, c, Some(moon), Some(&bank), &ctx)
            .map_err(|e| e.to_string())?;
        Ok((trace, obj))
    };
    let (trace, obj) = objective(&w)?;
    let analytic = net.backward(&w, &trace, &obj.d_logits, obj.d_z.as_deref()).map_err(|e| e.to_string())?;

    let mut probe = w.clone();
    let mut out = LayerErrors { tensors: Vec::new(), probed: 0, skipped: 0 };
    for ti in 0..w.tensors().len() {
        let len = w.tensors()[ti].data.len();
        let coords: Vec<usize> = match coords_per_tensor(len) {
            Some(n) => (0..n).map(|_| rng.random_range(0..len)).collect(),
            None => (0..len).collect(),
        };
        let mut a = Vec::with_capacity(coords.len());
        let mut n = Vec::with_capacity(coords.len());
        for &i in &coords {
            let orig = probe.tensors()[ti].data[i];
            probe.tensors_mut()[ti].data[i] = orig + eps;
            let (t_up, up) = objective(&probe)?;
            probe.tensors_mut()[ti].data[i] = orig - eps;
            let (t_down, down) = objective(&probe)?;
            probe.tensors_mut()[ti].data[i] = orig;
            out.probed += 1;
            let ai = analytic.tensors()[ti].data[i];
            let ni = (up.total - down.total) / (2.0 * eps);
            let disagrees = (ai - ni).abs() > LAYER_TOL * ai.abs().max(ni.abs()).max(1e-8);
            if disagrees && !net.same_pattern(&t_up, &t_down) {
                out.skipped += 1;
                continue;
            }
            a.push(ai);
            n.push(ni);
        }
        out.tensors.push((w.tensors()[ti].name.clone(), relative_error(&a, &n), a.len()));
    }
    Ok(out)
}

/// Finite-difference checks of every layer over `seeds` seeds.
pub fn layer_gradients(seeds: u64) -> Check {
    timed("layer gradients", || {
        let mut worst = (0.0f64, String::new());
        let (mut probed, mut skipped) = (0, 0);
        for (label, arch, batch) in gradcheck_architectures() {
            for s in 0..seeds {
                let report = layer_errors(&arch, batch, s, FD_EPS)?;
                probed += report.probed;
                skipped += report.skipped;
                for (tensor, err, _) in report.tensors {
                    if !(err <= worst.0) {
                        worst = (err, format!("{label} seed {s} {tensor}"));
                    }
                }
            }
        }
        if !(worst.0 < LAYER_TOL) {
            return Err(format!("relative error {:.3e} at {} >= {LAYER_TOL:e}", worst.0, worst.1));
        }
        if skipped * 100 > probed {
            return Err(format!("{skipped} of {probed} probes straddled a kink"));
        }
        Ok(format!(
            "{seeds} seeds, max relative error {:.2e} ({}), {skipped}/{probed} probes excluded at kinks",
            worst.0, worst.1
        ))
    })
}

pub fn cross_entropy_oracle() -> Check {
    timed("cross-entropy", || {
        let (uniform, _) = cross_entropy(&[0.0f64; 10], &[3], 10).map_err(|e| e.to_string())?;
        if (uniform - 10f64.ln()).abs() >= TRIVIAL_TOL {
            return Err(format!("uniform logits gave {uniform}, expected ln 10"));
        }
        let mut rng = seed::rng(0x30);
        let logits = random_vec(&mut rng, 4);
        let (got, grad) = cross_entropy(&logits, &[1], 4).map_err(|e| e.to_string())?;
        let den: f64 = logits.iter().map(|l| l.exp()).sum();
        let want = -(logits[1].exp() / den).ln();
        if (got - want).abs() >= ORACLE_TOL {
            return Err(format!("loss {got} vs oracle {want}"));
        }
        for (k, g) in grad.iter().enumerate() {
            let want = logits[k].exp() / den - if k == 1 { 1.0 } else { 0.0 };
            if (g - want).abs() >= ORACLE_TOL {
                return Err(format!("gradient[{k}] {g} vs oracle {want}"));
            }
        }
        Ok("ln C and softmax oracle".into())
    })
}

pub fn sgd_recurrence() -> Check {
    timed("sgd recurrence", || {
        let net = Network::new(ModelArchitecture::mlp(2, &[], 2, 2)).map_err(|e| e.to_string())?;
        let mut w = net.init(7);
        let w0 = w.clone();
        let mut g = net.zeros();
        for (i, t) in g.tensors_mut().iter_mut().enumerate() {
            for (j, v) in t.data.iter_mut().enumerate() {
                *v = ((i * 7 + j) % 5) as f32 * 0.1 - 0.2;
            }
        }
        let p = SgdParams { lr: 0.1, momentum: 0.9, weight_decay: 0.01 };
        let mut vel = net.zeros();
        sgd_step(&mut w, &g, &mut vel, p).map_err(|e| e.to_string())?;
        let w1 = w.clone();
        sgd_step(&mut w, &g, &mut vel, p).map_err(|e| e.to_string())?;
        let (lr, m, wd) = (p.lr as f64, p.momentum as f64, p.weight_decay as f64);
        for ti in 0..w.tensors().len() {
            for i in 0..w.tensors()[ti].data.len() {
                let x0 = w0.tensors()[ti].data[i] as f64;
                let gi = g.tensors()[ti].data[i] as f64;
                let v1 = gi + wd * x0;
                let x1 = x0 - lr * v1;
                let v2 = m * v1 + gi + wd * w1.tensors()[ti].data[i] as f64;
                let x2 = x1 - lr * v2;
                let got = w.tensors()[ti].data[i] as f64;
                if (got - x2).abs() > 1e-6 {
                    return Err(format!("{}[{i}]: {got} vs {x2}", w.tensors()[ti].name));
                }
            }
        }
        Ok("two momentum steps".into())
    })
}

/// Everything `verify` runs, in order.
pub fn run_all() -> Vec<Check> {
    vec![
        loss_oracles(100, 0x5eed),
        loss_gradients(10),
        cross_entropy_oracle(),
        sgd_recurrence(),
        layer_gradients(10),
    ]
}
