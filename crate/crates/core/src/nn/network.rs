use rand::Rng;

use super::arch::{LayerSpec, ModelArchitecture, Shape3};
use super::params::{ModelWeights, ParamSet, Tensor};
use super::Scalar;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy)]
enum Op {
    Conv {
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
    },
    Pool {
        size: usize,
        stride: usize,
    },
    Linear {
        inp: usize,
        out: usize,
    },
    Relu,
}

#[derive(Debug, Clone)]
struct Layer {
    op: Op,
    input: Shape3,
    output: Shape3,
    /// Index of the weight tensor; the bias follows it.
    param: Option<usize>,
}

/// A validated architecture with resolved layer shapes.
///
/// The network itself holds no weights; every pass takes a [`ParamSet`] so the
/// same network serves the local, global and previous models of a client.
#[derive(Debug, Clone)]
pub struct Network {
    arch: ModelArchitecture,
    layers: Vec<Layer>,
    /// Index into the activation list where the projection `z` sits.
    z_act: usize,
    fingerprint: u64,
    shapes: Vec<(String, Vec<usize>)>,
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T = f32> {
    fingerprint: u64,
    batch: usize,
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    acts: Vec<Vec<T>>,
    /// Flat input index of each pooled maximum, per pool layer.
    argmax: Vec<Vec<u32>>,
    z_act: usize,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn batch_size(&self) -> usize {
        self.batch
    }

    /// Row-major `batch × C`.
    pub fn logits(&self) -> &[T] {
        self.acts.last().expect("trace has output")
    }

    /// Row-major `batch × proj_dim`.
    pub fn z(&self) -> &[T] {
        &self.acts[self.z_act]
    }

    pub fn logits_row(&self, i: usize) -> &[T] {
        let c = self.logits().len() / self.batch;
        &self.logits()[i * c..(i + 1) * c]
    }

    pub fn z_row(&self, i: usize) -> &[T] {
        let d = self.z().len() / self.batch;
        &self.z()[i * d..(i + 1) * d]
    }
}

impl Network {
    pub fn new(arch: ModelArchitecture) -> Result<Self> {
        arch.validate_basics()?;
        let mut layers = Vec::new();
        let mut shapes = Vec::new();
        let mut shape = arch.input;

        let blocks = [("encoder", &arch.encoder), ("projection", &arch.projection)];
        let classifier = [LayerSpec::Linear {
            out_features: arch.num_classes,
        }];
        let named = blocks
            .iter()
            .flat_map(|(block, specs)| {
                specs
                    .iter()
                    .enumerate()
                    .map(move |(i, s)| (format!("{block}.{i}"), *s))
            })
            .chain(std::iter::once(("classifier".to_string(), classifier[0])));

        for (index, (name, spec)) in named.enumerate() {
            let (op, output) = resolve(index, spec, shape)?;
            let param = match op {
                Op::Conv { in_c, out_c, k, .. } => {
                    shapes.push((format!("{name}.weight"), vec![out_c, in_c, k, k]));
                    shapes.push((format!("{name}.bias"), vec![out_c]));
                    Some(shapes.len() - 2)
                }
                Op::Linear { inp, out } => {
                    shapes.push((format!("{name}.weight"), vec![out, inp]));
                    shapes.push((format!("{name}.bias"), vec![out]));
                    Some(shapes.len() - 2)
                }
                _ => None,
            };
            layers.push(Layer {
                op,
                input: shape,
                output,
                param,
            });
            shape = output;
        }

        let z_act = arch.encoder.len() + arch.projection.len();
        let fingerprint = arch.fingerprint();
        Ok(Self {
            arch,
            layers,
            z_act,
            fingerprint,
            shapes,
        })
    }

    pub fn architecture(&self) -> &ModelArchitecture {
        &self.arch
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn input_size(&self) -> usize {
        self.arch.input.size()
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    pub fn projection_dim(&self) -> usize {
        self.layers[self.z_act - 1].output.size()
    }

    pub fn param_count(&self) -> usize {
        self.shapes.iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    /// Weights uniform in ±1/√fan_in, biases zero. Deterministic per seed.
    pub fn init(&self, seed: u64) -> ModelWeights {
        let mut rng = seed::rng(seed::derive(seed, &[seed::STREAM_INIT]));
        let tensors = self
            .shapes
            .iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let data = if name.ends_with(".bias") {
                    vec![0.0; n]
                } else {
                    let fan_in: usize = shape[1..].iter().product();
                    let bound = 1.0 / (fan_in as f32).sqrt();
                    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
                };
                Tensor {
                    name: name.clone(),
                    shape: shape.clone(),
                    data,
                }
            })
            .collect();
        ParamSet::new(self.fingerprint, tensors)
    }

    pub fn zeros(&self) -> ModelWeights {
        self.from_flat(vec![0.0; self.param_count()])
            .expect("length matches by construction")
    }

    /// Splits a flat parameter vector (layer order) into named tensors.
    pub fn from_flat(&self, values: Vec<f32>) -> Result<ModelWeights> {
        if values.len() != self.param_count() {
            return Err(Error::Shape {
                context: "flat parameters",
                expected: self.param_count().to_string(),
                got: values.len().to_string(),
            });
        }
        let mut offset = 0;
        let tensors = self
            .shapes
            .iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let data = values[offset..offset + n].to_vec();
                offset += n;
                Tensor {
                    name: name.clone(),
                    shape: shape.clone(),
                    data,
                }
            })
            .collect();
        Ok(ParamSet::new(self.fingerprint, tensors))
    }

    fn check_weights<T: Scalar>(&self, w: &ParamSet<T>) -> Result<()> {
        if w.fingerprint() != self.fingerprint {
            return Err(Error::Fingerprint {
                expected: self.fingerprint,
                got: w.fingerprint(),
            });
        }
        Ok(())
    }

    /// Runs a batch (row-major, `batch × input_size`) through the network.
    pub fn forward<T: Scalar>(&self, w: &ParamSet<T>, inputs: &[T]) -> Result<ForwardTrace<T>> {
        self.check_weights(w)?;
        let n_in = self.input_size();
        if inputs.is_empty() || !inputs.len().is_multiple_of(n_in) {
            return Err(Error::Shape {
                context: "forward input",
                expected: format!("a positive multiple of {n_in} values"),
                got: format!("{} values", inputs.len()),
            });
        }
        let batch = inputs.len() / n_in;
        let tensors = w.tensors();

        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut argmax = Vec::with_capacity(self.layers.len());
        acts.push(inputs.to_vec());

        for layer in &self.layers {
            let x = acts.last().expect("non-empty");
            let mut y = vec![T::zero(); batch * layer.output.size()];
            let mut idx = Vec::new();
            match layer.op {
                Op::Linear { inp, out } => {
                    let p = layer.param.expect("linear has params");
                    linear_forward(x, &tensors[p].data, &tensors[p + 1].data, batch, inp, out, &mut y);
                }
                Op::Conv {
                    in_c,
                    out_c,
                    k,
                    stride,
                } => {
                    let p = layer.param.expect("conv has params");
                    let geom = ConvGeom::new(layer.input, layer.output, in_c, out_c, k, stride);
                    conv_forward(x, &tensors[p].data, &tensors[p + 1].data, batch, &geom, &mut y);
                }
                Op::Pool { size, stride } => {
                    idx = vec![0u32; y.len()];
                    pool_forward(x, batch, layer.input, layer.output, size, stride, &mut y, &mut idx);
                }
                Op::Relu => {
                    for (o, &v) in y.iter_mut().zip(x) {
                        *o = if v > T::zero() { v } else { T::zero() };
                    }
                }
            }
            acts.push(y);
            argmax.push(idx);
        }

        Ok(ForwardTrace {
            fingerprint: self.fingerprint,
            batch,
            acts,
            argmax,
            z_act: self.z_act,
        })
    }

    /// Reverse-mode gradients of a scalar objective given its gradient with
    /// respect to the logits and, optionally, the projection `z`.
    pub fn backward<T: Scalar>(
        &self,
        w: &ParamSet<T>,
        trace: &ForwardTrace<T>,
        d_logits: &[T],
        d_z: Option<&[T]>,
    ) -> Result<ParamSet<T>> {
        self.check_weights(w)?;
        if trace.fingerprint != self.fingerprint {
            return Err(Error::Fingerprint {
                expected: self.fingerprint,
                got: trace.fingerprint,
            });
        }
        let batch = trace.batch;
        if d_logits.len() != trace.logits().len() {
            return Err(Error::Shape {
                context: "logit gradient",
                expected: trace.logits().len().to_string(),
                got: d_logits.len().to_string(),
            });
        }
        if let Some(dz) = d_z {
            if dz.len() != trace.z().len() {
                return Err(Error::Shape {
                    context: "projection gradient",
                    expected: trace.z().len().to_string(),
                    got: dz.len().to_string(),
                });
            }
        }

        let tensors = w.tensors();
        let mut grads = w.zeros_like();
        let mut delta = d_logits.to_vec();

        for (li, layer) in self.layers.iter().enumerate().rev() {
            if li + 1 == self.z_act {
                if let Some(dz) = d_z {
                    for (d, &g) in delta.iter_mut().zip(dz) {
                        *d += g;
                    }
                }
            }
            let x = &trace.acts[li];
            let need_dx = li > 0;
            let mut dx = if need_dx {
                vec![T::zero(); x.len()]
            } else {
                Vec::new()
            };
            match layer.op {
                Op::Linear { inp, out } => {
                    let p = layer.param.expect("linear has params");
                    let (gw, gb) = split_pair(grads.tensors_mut(), p);
                    linear_backward(x, &tensors[p].data, &delta, batch, inp, out, gw, gb, need_dx.then_some(&mut dx[..]));
                }
                Op::Conv {
                    in_c,
                    out_c,
                    k,
                    stride,
                } => {
                    let p = layer.param.expect("conv has params");
                    let geom = ConvGeom::new(layer.input, layer.output, in_c, out_c, k, stride);
                    let (gw, gb) = split_pair(grads.tensors_mut(), p);
                    conv_backward(x, &tensors[p].data, &delta, batch, &geom, gw, gb, need_dx.then_some(&mut dx[..]));
                }
                Op::Pool { .. } => {
                    if need_dx {
                        let per_in = layer.input.size();
                        let per_out = layer.output.size();
                        for b in 0..batch {
                            let idx = &trace.argmax[li][b * per_out..(b + 1) * per_out];
                            let d = &delta[b * per_out..(b + 1) * per_out];
                            let dxb = &mut dx[b * per_in..(b + 1) * per_in];
                            for (&i, &g) in idx.iter().zip(d) {
                                dxb[i as usize] += g;
                            }
                        }
                    }
                }
                Op::Relu => {
                    if need_dx {
                        for ((o, &g), &v) in dx.iter_mut().zip(&delta).zip(x) {
                            if v > T::zero() {
                                *o = g;
                            }
                        }
                    }
                }
            }
            delta = dx;
        }
        Ok(grads)
    }

    /// Smallest distance of any rectifier input from zero, or of any pooled
    /// maximum from its runner-up. Finite differences with a step much
    /// smaller than this margin never cross a kink.
    pub fn kink_margin<T: Scalar>(&self, trace: &ForwardTrace<T>) -> f64 {
        let mut margin = f64::INFINITY;
        for (li, layer) in self.layers.iter().enumerate() {
            let x = &trace.acts[li];
            match layer.op {
                Op::Relu => {
                    for &v in x {
                        margin = margin.min(v.as_f64().abs());
                    }
                }
                Op::Pool { size, stride } => {
                    let (c, h, w) = (layer.input.channels, layer.input.height, layer.input.width);
                    let (oh, ow) = (layer.output.height, layer.output.width);
                    for b in 0..trace.batch {
                        let xb = &x[b * layer.input.size()..(b + 1) * layer.input.size()];
                        for ch in 0..c {
                            for oy in 0..oh {
                                for ox in 0..ow {
                                    let mut vals: Vec<f64> = (0..size)
                                        .flat_map(|ky| (0..size).map(move |kx| (ky, kx)))
                                        .map(|(ky, kx)| {
                                            xb[ch * h * w + (oy * stride + ky) * w + ox * stride + kx].as_f64()
                                        })
                                        .collect();
                                    vals.sort_by(|a, b| b.total_cmp(a));
                                    if vals.len() > 1 {
                                        margin = margin.min(vals[0] - vals[1]);
                                    }
                                }
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        margin
    }

    /// Whether two passes take the same rectifier branches and pool maxima.
    /// Within one pattern the network is smooth in its weights.
    pub fn same_pattern<T: Scalar>(&self, a: &ForwardTrace<T>, b: &ForwardTrace<T>) -> bool {
        a.argmax == b.argmax
            && self.layers.iter().enumerate().all(|(li, layer)| {
                !matches!(layer.op, Op::Relu)
                    || a.acts[li].iter().zip(&b.acts[li]).all(|(x, y)| (*x > T::zero()) == (*y > T::zero()))
            })
    }
}

fn resolve(index: usize, spec: LayerSpec, input: Shape3) -> Result<(Op, Shape3)> {
    let err = |reason: String| Error::Architecture {
        layer: index,
        reason,
    };
    match spec {
        LayerSpec::Linear { out_features } => {
            if out_features == 0 {
                return Err(err("linear layer with zero outputs".into()));
            }
            Ok((
                Op::Linear {
                    inp: input.size(),
                    out: out_features,
                },
                Shape3::flat(out_features),
            ))
        }
        LayerSpec::Conv2d {
            out_channels,
            kernel,
            stride,
        } => {
            if out_channels == 0 || kernel == 0 || stride == 0 {
                return Err(err("conv parameters must be positive".into()));
            }
            if input.height < kernel || input.width < kernel {
                return Err(err(format!(
                    "{kernel}x{kernel} kernel does not fit {}x{} input",
                    input.height, input.width
                )));
            }
            let oh = (input.height - kernel) / stride + 1;
            let ow = (input.width - kernel) / stride + 1;
            Ok((
                Op::Conv {
                    in_c: input.channels,
                    out_c: out_channels,
                    k: kernel,
                    stride,
                },
                Shape3::new(out_channels, oh, ow),
            ))
        }
        LayerSpec::MaxPool { size, stride } => {
            if size == 0 || stride == 0 {
                return Err(err("pool parameters must be positive".into()));
            }
            if input.height < size || input.width < size {
                return Err(err(format!(
                    "{size}x{size} pool does not fit {}x{} input",
                    input.height, input.width
                )));
            }
            let oh = (input.height - size) / stride + 1;
            let ow = (input.width - size) / stride + 1;
            Ok((Op::Pool { size, stride }, Shape3::new(input.channels, oh, ow)))
        }
        LayerSpec::Relu => Ok((Op::Relu, input)),
    }
}

fn split_pair<T>(tensors: &mut [Tensor<T>], p: usize) -> (&mut [T], &mut [T]) {
    let (a, b) = tensors[p..p + 2].split_at_mut(1);
    (&mut a[0].data, &mut b[0].data)
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (o, &v) in y.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

fn linear_forward<T: Scalar>(x: &[T], w: &[T], b: &[T], batch: usize, inp: usize, out: usize, y: &mut [T]) {
    for n in 0..batch {
        let xr = &x[n * inp..(n + 1) * inp];
        let yr = &mut y[n * out..(n + 1) * out];
        for o in 0..out {
            yr[o] = b[o] + dot(&w[o * inp..(o + 1) * inp], xr);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn linear_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    dy: &[T],
    batch: usize,
    inp: usize,
    out: usize,
    gw: &mut [T],
    gb: &mut [T],
    mut dx: Option<&mut [T]>,
) {
    for n in 0..batch {
        let xr = &x[n * inp..(n + 1) * inp];
        let dyr = &dy[n * out..(n + 1) * out];
        for o in 0..out {
            let g = dyr[o];
            if g == T::zero() {
                continue;
            }
            gb[o] += g;
            axpy(g, xr, &mut gw[o * inp..(o + 1) * inp]);
            if let Some(dx) = dx.as_deref_mut() {
                axpy(g, &w[o * inp..(o + 1) * inp], &mut dx[n * inp..(n + 1) * inp]);
            }
        }
    }
}

struct ConvGeom {
    in_c: usize,
    out_c: usize,
    k: usize,
    stride: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn new(input: Shape3, output: Shape3, in_c: usize, out_c: usize, k: usize, stride: usize) -> Self {
        Self {
            in_c,
            out_c,
            k,
            stride,
            h: input.height,
            w: input.width,
            oh: output.height,
            ow: output.width,
        }
    }

    fn rows(&self) -> usize {
        self.in_c * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    /// Unfolds one sample into a `rows × positions` patch matrix.
    fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let p = self.positions();
        for c in 0..self.in_c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let r = (c * self.k + ky) * self.k + kx;
                    let row = &mut cols[r * p..(r + 1) * p];
                    for oy in 0..self.oh {
                        let src = c * self.h * self.w + (oy * self.stride + ky) * self.w + kx;
                        for ox in 0..self.ow {
                            row[oy * self.ow + ox] = x[src + ox * self.stride];
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        let p = self.positions();
        for c in 0..self.in_c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let r = (c * self.k + ky) * self.k + kx;
                    let row = &cols[r * p..(r + 1) * p];
                    for oy in 0..self.oh {
                        let dst = c * self.h * self.w + (oy * self.stride + ky) * self.w + kx;
                        for ox in 0..self.ow {
                            dx[dst + ox * self.stride] += row[oy * self.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

fn conv_forward<T: Scalar>(x: &[T], w: &[T], b: &[T], batch: usize, g: &ConvGeom, y: &mut [T]) {
    let (rows, p) = (g.rows(), g.positions());
    let per_in = g.in_c * g.h * g.w;
    let per_out = g.out_c * p;
    let mut cols = vec![T::zero(); rows * p];
    for n in 0..batch {
        g.im2col(&x[n * per_in..(n + 1) * per_in], &mut cols);
        let yn = &mut y[n * per_out..(n + 1) * per_out];
        for o in 0..g.out_c {
            let yo = &mut yn[o * p..(o + 1) * p];
            yo.fill(b[o]);
            for r in 0..rows {
                axpy(w[o * rows + r], &cols[r * p..(r + 1) * p], yo);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    dy: &[T],
    batch: usize,
    g: &ConvGeom,
    gw: &mut [T],
    gb: &mut [T],
    mut dx: Option<&mut [T]>,
) {
    let (rows, p) = (g.rows(), g.positions());
    let per_in = g.in_c * g.h * g.w;
    let per_out = g.out_c * p;
    let mut cols = vec![T::zero(); rows * p];
    let mut dcols = vec![T::zero(); rows * p];
    for n in 0..batch {
        g.im2col(&x[n * per_in..(n + 1) * per_in], &mut cols);
        let dyn_ = &dy[n * per_out..(n + 1) * per_out];
        dcols.fill(T::zero());
        for o in 0..g.out_c {
            let dyo = &dyn_[o * p..(o + 1) * p];
            gb[o] += dyo.iter().copied().sum();
            for r in 0..rows {
                gw[o * rows + r] += dot(dyo, &cols[r * p..(r + 1) * p]);
                if dx.is_some() {
                    axpy(w[o * rows + r], dyo, &mut dcols[r * p..(r + 1) * p]);
                }
            }
        }
        if let Some(dx) = dx.as_deref_mut() {
            g.col2im(&dcols, &mut dx[n * per_in..(n + 1) * per_in]);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn pool_forward<T: Scalar>(
    x: &[T],
    batch: usize,
    input: Shape3,
    output: Shape3,
    size: usize,
    stride: usize,
    y: &mut [T],
    idx: &mut [u32],
) {
    let (c, h, w) = (input.channels, input.height, input.width);
    let (oh, ow) = (output.height, output.width);
    for n in 0..batch {
        let xb = &x[n * input.size()..(n + 1) * input.size()];
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = usize::MAX;
                    let mut best_v = T::neg_infinity();
                    for ky in 0..size {
                        for kx in 0..size {
                            let i = ch * h * w + (oy * stride + ky) * w + ox * stride + kx;
                            if best == usize::MAX || xb[i] > best_v {
                                best = i;
                                best_v = xb[i];
                            }
                        }
                    }
                    let o = n * output.size() + ch * oh * ow + oy * ow + ox;
                    y[o] = best_v;
                    idx[o] = best as u32;
                }
            }
        }
    }
}
