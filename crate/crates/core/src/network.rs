//! Dense feed-forward networks over 2-D inputs.
//!
//! Parameters live in one flat vector, layer-major, each layer storing its
//! weight matrix row-major (`out_dim × in_dim`) followed by its bias.
//!
//! Evaluation is batched. Activations are stored feature-major as
//! `[feature][channel][sample]`, where the channel axis is either just the
//! value (`Channels::Value`) or the six jet slots (`Channels::Jet`). The
//! matrix products run over contiguous `channel × sample` rows, so value
//! and jet evaluation share the exact same arithmetic on the value channel.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numcore::jet::{mul_adjoint, recip_derivs, tanh_derivs, unary_adjoint};
use crate::numcore::{Jet2, Tape, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("network has no layers")]
    Empty,
    #[error("network input dimension must be 2, got {0}")]
    InputDim(usize),
    #[error("layer {layer}: input dimension {got} does not match previous output {expected}")]
    Mismatch {
        layer: usize,
        expected: usize,
        got: usize,
    },
    #[error("layer {0}: dimensions must be positive")]
    ZeroDim(usize),
    #[error("softmax is only allowed on the final layer (found on layer {0})")]
    SoftmaxNotLast(usize),
    #[error("parameter vector has length {got}, spec needs {expected}")]
    ParamLength { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Linear,
    Softmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

/// A validated stack of layers taking `(x, y)` as input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LayerSpec>", into = "Vec<LayerSpec>")]
pub struct NetworkSpec {
    layers: Vec<LayerSpec>,
}

impl TryFrom<Vec<LayerSpec>> for NetworkSpec {
    type Error = NetworkError;
    fn try_from(layers: Vec<LayerSpec>) -> Result<Self, NetworkError> {
        NetworkSpec::new(layers)
    }
}

impl From<NetworkSpec> for Vec<LayerSpec> {
    fn from(s: NetworkSpec) -> Self {
        s.layers
    }
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self, NetworkError> {
        let first = layers.first().ok_or(NetworkError::Empty)?;
        if first.in_dim != 2 {
            return Err(NetworkError::InputDim(first.in_dim));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim == 0 || l.out_dim == 0 {
                return Err(NetworkError::ZeroDim(i));
            }
            if i > 0 && layers[i - 1].out_dim != l.in_dim {
                return Err(NetworkError::Mismatch {
                    layer: i,
                    expected: layers[i - 1].out_dim,
                    got: l.in_dim,
                });
            }
            if l.activation == Activation::Softmax && i + 1 != layers.len() {
                return Err(NetworkError::SoftmaxNotLast(i));
            }
        }
        Ok(NetworkSpec { layers })
    }

    /// `hidden.len()` tanh layers followed by one dense layer with `head`.
    pub fn mlp(hidden: &[usize], outputs: usize, head: Activation) -> Result<Self, NetworkError> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = 2;
        for &h in hidden {
            layers.push(LayerSpec {
                in_dim: prev,
                out_dim: h,
                activation: Activation::Tanh,
            });
            prev = h;
        }
        layers.push(LayerSpec {
            in_dim: prev,
            out_dim: outputs,
            activation: head,
        });
        NetworkSpec::new(layers)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.out_dim * (l.in_dim + 1)).sum()
    }

    /// Offsets of each layer's weights and bias in the flat vector.
    pub fn offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.layers
            .iter()
            .map(|l| {
                let w = off;
                let b = w + l.out_dim * l.in_dim;
                off = b + l.out_dim;
                (w, b)
            })
            .collect()
    }

    /// `true` for weight entries, `false` for biases.
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            mask.extend(std::iter::repeat_n(true, l.out_dim * l.in_dim));
            mask.extend(std::iter::repeat_n(false, l.out_dim));
        }
        mask
    }

    #[allow(dead_code)]
    fn widest(&self) -> usize {
        self.layers.iter().map(|l| l.out_dim.max(l.in_dim)).max().unwrap_or(2)
    }
}

/// Flat parameter vector of one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub values: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        NetworkParams {
            values: vec![0.0; spec.param_count()],
        }
    }

    pub fn from_flat(spec: &NetworkSpec, values: Vec<f64>) -> Result<Self, NetworkError> {
        if values.len() != spec.param_count() {
            return Err(NetworkError::ParamLength {
                expected: spec.param_count(),
                got: values.len(),
            });
        }
        Ok(NetworkParams { values })
    }

    /// `(weights, bias)` of layer `i`.
    pub fn layer<'a>(&'a self, spec: &NetworkSpec, i: usize) -> (&'a [f64], &'a [f64]) {
        let (w, b) = spec.offsets()[i];
        let l = spec.layers[i];
        (&self.values[w..b], &self.values[b..b + l.out_dim])
    }
}

/// Glorot-uniform weights from `rng`, zero biases.
pub fn init_glorot_with(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> NetworkParams {
    let mut values = Vec::with_capacity(spec.param_count());
    for l in &spec.layers {
        let limit = (6.0 / (l.in_dim + l.out_dim) as f64).sqrt();
        let dist = Uniform::new(-limit, limit);
        for _ in 0..l.out_dim * l.in_dim {
            values.push(dist.sample(rng));
        }
        values.extend(std::iter::repeat_n(0.0, l.out_dim));
    }
    NetworkParams { values }
}

/// Glorot-uniform initialisation from a ChaCha8 stream seeded with `seed`.
pub fn init_glorot(spec: &NetworkSpec, seed: u64) -> NetworkParams {
    init_glorot_with(spec, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `lambda · Σ w²` over weights only.
pub fn l2_penalty(params: &NetworkParams, spec: &NetworkSpec, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (v, is_w) in params.values.iter().zip(spec.weight_mask()) {
        if is_w {
            acc += v * v;
        }
    }
    lambda * acc
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channels {
    Value,
    Jet,
}

impl Channels {
    pub fn count(self) -> usize {
        match self {
            Channels::Value => 1,
            Channels::Jet => 6,
        }
    }
}

/// Scratch buffers for one batched forward/backward pass.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    channels: usize,
    batch: usize,
    /// `post[0]` is the input; `post[l + 1]` the output of layer `l`.
    post: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    bar: Vec<f64>,
    bar_next: Vec<f64>,
    pre_bar: Vec<f64>,
    a_t: Vec<f64>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Output of the last forward pass, `[output][channel][sample]`.
    pub fn output(&self) -> &[f64] {
        self.post.last().map_or(&[], |v| v.as_slice())
    }

    /// Jet of output `j` for sample `s` (jet channels only).
    pub fn output_jet(&self, j: usize, s: usize) -> Jet2 {
        read_jet(self.output(), j, s, self.batch)
    }

    pub fn output_value(&self, j: usize, s: usize) -> f64 {
        self.output()[j * self.channels * self.batch + s]
    }
}

#[inline]
fn read_jet(buf: &[f64], j: usize, s: usize, batch: usize) -> Jet2 {
    let base = j * 6 * batch + s;
    Jet2 {
        value: buf[base],
        grad: [buf[base + batch], buf[base + 2 * batch]],
        hess: [buf[base + 3 * batch], buf[base + 4 * batch], buf[base + 5 * batch]],
    }
}

#[inline]
fn write_jet(buf: &mut [f64], j: usize, s: usize, batch: usize, v: &Jet2) {
    let base = j * 6 * batch + s;
    buf[base] = v.value;
    buf[base + batch] = v.grad[0];
    buf[base + 2 * batch] = v.grad[1];
    buf[base + 3 * batch] = v.hess[0];
    buf[base + 4 * batch] = v.hess[1];
    buf[base + 5 * batch] = v.hess[2];
}

/// Batched forward pass. Results are left in `ws` (see [`Workspace::output`]).
pub fn forward_batch(
    spec: &NetworkSpec,
    params: &[f64],
    points: &[[f64; 2]],
    channels: Channels,
    ws: &mut Workspace,
) {
    let c = channels.count();
    let b = points.len();
    let cb = c * b;
    let nl = spec.layers.len();
    ws.channels = c;
    ws.batch = b;
    ws.post.resize_with(nl + 1, Vec::new);
    ws.pre.resize_with(nl, Vec::new);

    let input = &mut ws.post[0];
    input.clear();
    input.resize(2 * cb, 0.0);
    for (s, p) in points.iter().enumerate() {
        input[s] = p[0];
        input[cb + s] = p[1];
        if c == 6 {
            input[b + s] = 1.0;
            input[cb + 2 * b + s] = 1.0;
        }
    }

    let offsets = spec.offsets();
    for (l, layer) in spec.layers.iter().enumerate() {
        let (w_off, b_off) = offsets[l];
        let w = &params[w_off..b_off];
        let bias = &params[b_off..b_off + layer.out_dim];
        let (head, tail) = ws.post.split_at_mut(l + 1);
        let a = &head[l];
        let z = &mut ws.pre[l];
        z.resize(layer.out_dim * cb, 0.0);
        matmul(layer.out_dim, layer.in_dim, cb, w, layer.in_dim, 1, a, z);
        for j in 0..layer.out_dim {
            for r in z[j * cb..j * cb + b].iter_mut() {
                *r += bias[j];
            }
        }
        let out = &mut tail[0];
        out.resize(layer.out_dim * cb, 0.0);
        activate(layer, z, out, c, b);
    }
}

const TILE: usize = 16;

/// `out[j][·] = Σ_k w(j, k)·a[k][·]` with `w(j, k) = w[j·rs + k·cs]`.
/// Each output element accumulates over `k` in ascending order.
#[allow(clippy::too_many_arguments)]
fn matmul(m: usize, kdim: usize, n: usize, w: &[f64], rs: usize, cs: usize, a: &[f64], out: &mut [f64]) {
    for j in 0..m {
        let orow = &mut out[j * n..(j + 1) * n];
        let mut t0 = 0;
        while t0 + TILE <= n {
            let mut acc = [0.0f64; TILE];
            for k in 0..kdim {
                let wv = w[j * rs + k * cs];
                let arow: &[f64; TILE] = a[k * n + t0..k * n + t0 + TILE].try_into().unwrap();
                for t in 0..TILE {
                    acc[t] += wv * arow[t];
                }
            }
            orow[t0..t0 + TILE].copy_from_slice(&acc);
            t0 += TILE;
        }
        if t0 < n {
            let rest = &mut orow[t0..];
            rest.iter_mut().for_each(|r| *r = 0.0);
            for k in 0..kdim {
                let wv = w[j * rs + k * cs];
                for (r, &x) in rest.iter_mut().zip(&a[k * n + t0..(k + 1) * n]) {
                    *r += wv * x;
                }
            }
        }
    }
}

fn transpose(rows: usize, cols: usize, a: &[f64], out: &mut Vec<f64>) {
    out.resize(rows * cols, 0.0);
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
}

fn activate(layer: &LayerSpec, z: &[f64], out: &mut [f64], c: usize, b: usize) {
    let cb = c * b;
    match (layer.activation, c) {
        (Activation::Linear, _) => out.copy_from_slice(z),
        (Activation::Tanh, 1) => {
            for (o, &v) in out.iter_mut().zip(z) {
                *o = crate::numcore::jet::tanh(v);
            }
        }
        (Activation::Tanh, _) => {
            for j in 0..layer.out_dim {
                for s in 0..b {
                    let t = read_jet(z, j, s, b).tanh();
                    write_jet(out, j, s, b, &t);
                }
            }
        }
        (Activation::Softmax, 1) => {
            let n = layer.out_dim;
            for s in 0..b {
                let m = (0..n).map(|j| z[j * cb + s]).fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for j in 0..n {
                    let e = (z[j * cb + s] - m).exp();
                    out[j * cb + s] = e;
                    sum += e;
                }
                let r = 1.0 / sum;
                for j in 0..n {
                    out[j * cb + s] *= r;
                }
            }
        }
        (Activation::Softmax, _) => {
            let n = layer.out_dim;
            let mut logits = vec![Jet2::ZERO; n];
            for s in 0..b {
                for (j, lj) in logits.iter_mut().enumerate() {
                    *lj = read_jet(z, j, s, b);
                }
                for (j, phi) in crate::numcore::softmax_jets(&logits).iter().enumerate() {
                    write_jet(out, j, s, b, phi);
                }
            }
        }
    }
}

/// Reverse pass after [`forward_batch`]: accumulates `Σ ∂L/∂θ` into `grad`
/// given `out_bar = ∂L/∂output` laid out like [`Workspace::output`].
pub fn backward_batch(
    spec: &NetworkSpec,
    params: &[f64],
    ws: &mut Workspace,
    out_bar: &[f64],
    grad: &mut [f64],
) {
    let c = ws.channels;
    let b = ws.batch;
    let cb = c * b;
    let offsets = spec.offsets();
    let mut bar = std::mem::take(&mut ws.bar);
    let mut bar_next = std::mem::take(&mut ws.bar_next);
    let mut pre_bar = std::mem::take(&mut ws.pre_bar);
    let mut a_t = std::mem::take(&mut ws.a_t);
    let mut row = Vec::new();
    bar.clear();
    bar.extend_from_slice(out_bar);

    for (l, layer) in spec.layers.iter().enumerate().rev() {
        let (w_off, b_off) = offsets[l];
        pre_bar.resize(layer.out_dim * cb, 0.0);
        activate_backward(layer, &ws.pre[l], &ws.post[l + 1], &bar, &mut pre_bar, c, b);

        // weight gradient: samples accumulated in order, vectorised over inputs
        let a = &ws.post[l];
        transpose(layer.in_dim, cb, a, &mut a_t);
        row.resize(layer.in_dim, 0.0);
        for j in 0..layer.out_dim {
            let zb = &pre_bar[j * cb..(j + 1) * cb];
            row.iter_mut().for_each(|r| *r = 0.0);
            for (k, &zk) in zb.iter().enumerate() {
                let ak = &a_t[k * layer.in_dim..(k + 1) * layer.in_dim];
                for (r, &x) in row.iter_mut().zip(ak) {
                    *r += zk * x;
                }
            }
            let g = &mut grad[w_off + j * layer.in_dim..w_off + (j + 1) * layer.in_dim];
            for (gi, r) in g.iter_mut().zip(&row) {
                *gi += r;
            }
            let mut acc = 0.0;
            for &x in &zb[..b] {
                acc += x;
            }
            grad[b_off + j] += acc;
        }

        if l > 0 {
            let w = &params[w_off..b_off];
            bar_next.resize(layer.in_dim * cb, 0.0);
            matmul(layer.in_dim, layer.out_dim, cb, w, 1, layer.in_dim, &pre_bar, &mut bar_next);
            std::mem::swap(&mut bar, &mut bar_next);
        }
    }
    ws.bar = bar;
    ws.bar_next = bar_next;
    ws.pre_bar = pre_bar;
    ws.a_t = a_t;
}

fn activate_backward(
    layer: &LayerSpec,
    z: &[f64],
    out: &[f64],
    out_bar: &[f64],
    z_bar: &mut [f64],
    c: usize,
    b: usize,
) {
    let cb = c * b;
    match (layer.activation, c) {
        (Activation::Linear, _) => z_bar.copy_from_slice(out_bar),
        (Activation::Tanh, 1) => {
            for ((zb, &o), &ob) in z_bar.iter_mut().zip(out).zip(out_bar) {
                *zb = (1.0 - o * o) * ob;
            }
        }
        (Activation::Tanh, _) => {
            for j in 0..layer.out_dim {
                for s in 0..b {
                    let zj = read_jet(z, j, s, b);
                    let (_, d1, d2, d3) = tanh_derivs(zj.value);
                    let ob = read_jet(out_bar, j, s, b);
                    write_jet(z_bar, j, s, b, &unary_adjoint(&zj, d1, d2, d3, &ob));
                }
            }
        }
        (Activation::Softmax, 1) => {
            let n = layer.out_dim;
            for s in 0..b {
                let mut dot = 0.0;
                for j in 0..n {
                    dot += out[j * cb + s] * out_bar[j * cb + s];
                }
                for j in 0..n {
                    z_bar[j * cb + s] = out[j * cb + s] * (out_bar[j * cb + s] - dot);
                }
            }
        }
        (Activation::Softmax, _) => {
            let n = layer.out_dim;
            let mut zs = vec![Jet2::ZERO; n];
            let mut es = vec![Jet2::ZERO; n];
            let mut e_bar = vec![Jet2::ZERO; n];
            for s in 0..b {
                for j in 0..n {
                    zs[j] = read_jet(z, j, s, b);
                }
                let m = zs.iter().map(|z| z.value).fold(f64::NEG_INFINITY, f64::max);
                let mut sum = Jet2::ZERO;
                for j in 0..n {
                    let mut shifted = zs[j];
                    shifted.value -= m;
                    es[j] = shifted.exp();
                    sum += es[j];
                }
                let (r0, r1, r2, r3) = recip_derivs(sum.value).expect("sum ≥ 1");
                let r = sum.unary(r0, r1, r2);
                let mut r_bar = Jet2::ZERO;
                for j in 0..n {
                    let pb = read_jet(out_bar, j, s, b);
                    e_bar[j] = mul_adjoint(&r, &pb);
                    r_bar += mul_adjoint(&es[j], &pb);
                }
                let sum_bar = unary_adjoint(&sum, r1, r2, r3, &r_bar);
                for j in 0..n {
                    let eb = e_bar[j] + sum_bar;
                    let e = es[j].value;
                    write_jet(z_bar, j, s, b, &unary_adjoint(&zs[j], e, e, e, &eb));
                }
            }
        }
    }
}

/// Single-point forward pass.
pub fn forward(params: &NetworkParams, spec: &NetworkSpec, x: [f64; 2]) -> Vec<f64> {
    let mut ws = Workspace::new();
    forward_batch(spec, &params.values, &[x], Channels::Value, &mut ws);
    ws.output().to_vec()
}

/// Single-point forward pass carrying value, gradient and Hessian w.r.t. `x`.
pub fn forward_jet(params: &NetworkParams, spec: &NetworkSpec, x: [f64; 2]) -> Vec<Jet2> {
    let mut ws = Workspace::new();
    forward_batch(spec, &params.values, &[x], Channels::Jet, &mut ws);
    (0..spec.output_dim()).map(|j| ws.output_jet(j, 0)).collect()
}

/// Builds the network on a tape, reading parameters from `offset` onward.
/// Independent of the batched engine; used as a cross-check.
pub fn tape_forward(tape: &mut Tape<'_>, spec: &NetworkSpec, offset: usize, x: [f64; 2]) -> Vec<Var> {
    let (jx, jy) = crate::numcore::jet_seed(x);
    let mut acts = vec![tape.leaf(jx), tape.leaf(jy)];
    for (layer, (w, b)) in spec.layers.iter().zip(spec.offsets()) {
        let z: Vec<Var> = (0..layer.out_dim)
            .map(|j| tape.affine(&acts, offset + w + j * layer.in_dim, Some(offset + b + j)))
            .collect();
        acts = match layer.activation {
            Activation::Linear => z,
            Activation::Tanh => z.into_iter().map(|v| tape.tanh(v)).collect(),
            Activation::Softmax => tape.softmax(&z),
        };
    }
    acts
}
