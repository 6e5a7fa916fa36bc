//! Path convolution: the learned spatial operator.
//!
//! Stochastic form, for a path set with `p` walks of length `k` per origin:
//!
//! ```text
//! out[j][ch] = (1/p) * sum_w sum_i s[(ch,) i] * f[walk_jw[i]][ch]
//! ```
//!
//! Deterministic form, its exact expectation over the uniform-walk
//! distribution (`M = D^-1 A`, one expected walk step):
//!
//! ```text
//! out = sum_{i<k} s_i * M^i f        (M^0 = I)
//! ```
//!
//! Both are linear in the features and in the kernel, so the backward pass
//! is the exact adjoint: the stochastic one scatters through the same path
//! set the forward used, the deterministic one applies powers of the
//! transpose `A D^-1`. With `sum_i |s_i| <= 1` the deterministic operator
//! is sup-norm non-expansive, because each `M^i` averages.
//!
//! Kernel variants share one flat weight layout, `(layer, channel, index)`
//! row-major with the leading dimensions dropped when shared: `Global`
//! stores `k` weights for the whole net, `PerLayer` stores `L*k`,
//! `DepthWise` stores `L*c*k`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::graph::Graph;
use crate::matrix::FeatureMatrix;
use crate::sampler::{derive_seed, PathSet, WalkConfig};

/// How kernel weights are shared across the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelVariant {
    /// One `k`-vector for every layer and channel.
    Global,
    /// One `k`-vector per layer, shared across channels.
    PerLayer,
    /// One `k`-vector per layer per channel.
    DepthWise,
}

/// Learnable path-mixing weights for the whole network.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialKernel {
    variant: KernelVariant,
    layers: usize,
    channels: usize,
    length: usize,
    weights: Vec<f64>,
}

/// One layer's view of the kernel, as consumed by the convolution.
#[derive(Clone, Copy, Debug)]
pub enum KernelSlice<'a> {
    /// `k` weights shared by all channels.
    Shared(&'a [f64]),
    /// `channels * k` weights, `(channel, index)` row-major.
    PerChannel { weights: &'a [f64], channels: usize },
}

impl KernelSlice<'_> {
    pub fn length(&self) -> usize {
        match self {
            KernelSlice::Shared(s) => s.len(),
            KernelSlice::PerChannel { weights, channels } => weights.len() / channels,
        }
    }

    pub fn weight(&self, channel: usize, index: usize) -> f64 {
        match self {
            KernelSlice::Shared(s) => s[index],
            KernelSlice::PerChannel { weights, channels } => {
                weights[channel * (weights.len() / channels) + index]
            }
        }
    }

    /// Flat length of this slice's gradient buffer.
    pub fn grad_len(&self) -> usize {
        match self {
            KernelSlice::Shared(s) => s.len(),
            KernelSlice::PerChannel { weights, .. } => weights.len(),
        }
    }
}

impl SpatialKernel {
    /// Seeded init: every weight uniform in `[-1/k, 1/k]`, except index 0 of
    /// each `k`-vector set to `1/k + U(-1/(10k), 1/(10k))`. The operator
    /// starts near `(1/k) * I` plus small noise, a gentle averaging that
    /// keeps early activations finite at any depth.
    pub fn init(
        variant: KernelVariant,
        layers: usize,
        channels: usize,
        length: usize,
        seed: u64,
    ) -> Self {
        assert!(length >= 1 && layers >= 1 && channels >= 1);
        let count = Self::weight_count(variant, layers, channels, length);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inv_k = 1.0 / length as f64;
        let weights = (0..count)
            .map(|idx| {
                let u = 2.0 * rng.random::<f64>() - 1.0;
                if idx % length == 0 {
                    inv_k + 0.1 * inv_k * u
                } else {
                    inv_k * u
                }
            })
            .collect();
        Self { variant, layers, channels, length, weights }
    }

    /// Wraps explicit weights; length must match the variant's count.
    pub fn from_weights(
        variant: KernelVariant,
        layers: usize,
        channels: usize,
        length: usize,
        weights: Vec<f64>,
    ) -> Self {
        assert_eq!(weights.len(), Self::weight_count(variant, layers, channels, length));
        Self { variant, layers, channels, length, weights }
    }

    pub fn weight_count(
        variant: KernelVariant,
        layers: usize,
        channels: usize,
        length: usize,
    ) -> usize {
        match variant {
            KernelVariant::Global => length,
            KernelVariant::PerLayer => layers * length,
            KernelVariant::DepthWise => layers * channels * length,
        }
    }

    pub fn variant(&self) -> KernelVariant {
        self.variant
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// The view layer `layer` convolves with.
    pub fn slice(&self, layer: usize) -> KernelSlice<'_> {
        assert!(layer < self.layers, "layer {layer} out of {}", self.layers);
        match self.variant {
            KernelVariant::Global => KernelSlice::Shared(&self.weights),
            KernelVariant::PerLayer => {
                KernelSlice::Shared(&self.weights[layer * self.length..][..self.length])
            }
            KernelVariant::DepthWise => KernelSlice::PerChannel {
                weights: &self.weights
                    [layer * self.channels * self.length..][..self.channels * self.length],
                channels: self.channels,
            },
        }
    }

    /// Adds a slice-shaped gradient into the flat kernel gradient at the
    /// region layer `layer` reads from. `Global` layers all accumulate into
    /// the same `k` weights.
    pub fn accumulate_layer_grad(&self, layer: usize, slice_grad: &[f64], grad: &mut [f64]) {
        assert_eq!(grad.len(), self.weights.len());
        let offset = match self.variant {
            KernelVariant::Global => 0,
            KernelVariant::PerLayer => layer * self.length,
            KernelVariant::DepthWise => layer * self.channels * self.length,
        };
        for (dst, &g) in grad[offset..offset + slice_grad.len()].iter_mut().zip(slice_grad) {
            *dst += g;
        }
    }
}

/// One walk's kernel-weighted feature sum, written over `dst`.
fn walk_contribution(
    dst: &mut [f64],
    paths: &PathSet,
    f: &FeatureMatrix,
    kernel: &KernelSlice,
    origin: u32,
    w: usize,
) {
    dst.fill(0.0);
    let walk = paths.walk(origin, w);
    match kernel {
        KernelSlice::Shared(s) => {
            for (i, &v) in walk.iter().enumerate() {
                let coef = s[i];
                if coef != 0.0 {
                    for (o, &x) in dst.iter_mut().zip(f.row(v as usize)) {
                        *o += coef * x;
                    }
                }
            }
        }
        KernelSlice::PerChannel { weights, .. } => {
            let k = walk.len();
            for (i, &v) in walk.iter().enumerate() {
                for (ch, (o, &x)) in dst.iter_mut().zip(f.row(v as usize)).enumerate() {
                    *o += weights[ch * k + i] * x;
                }
            }
        }
    }
}

/// Stochastic path convolution over a sampled path set.
///
/// The walk average is computed as `base + sum_w (c_w - base) / p` with
/// `base` the first walk's contribution: when every walk contributes the
/// same value (identity kernel, or any kernel on a single-node component)
/// the difference sum is exactly zero and the output is bitwise the
/// single-walk result, for any `p`.
pub fn path_conv_forward(
    paths: &PathSet,
    f: &FeatureMatrix,
    kernel: &KernelSlice,
) -> FeatureMatrix {
    let n = paths.node_count();
    assert_eq!(f.rows(), n, "feature rows must equal path-set node count");
    let (p, k) = (paths.walks_per_node(), paths.length());
    assert_eq!(kernel.length(), k, "kernel length must equal walk length");
    let c = f.cols();
    if let KernelSlice::PerChannel { channels, .. } = kernel {
        assert_eq!(*channels, c, "per-channel kernel must match feature channels");
    }
    let mut out = FeatureMatrix::zeros(n, c);
    out.data_mut()
        .par_chunks_mut(c.max(1))
        .enumerate()
        .for_each_init(
            || (vec![0.0f64; c], vec![0.0f64; c]),
            |(temp, acc), (j, out_row)| {
                walk_contribution(out_row, paths, f, kernel, j as u32, 0);
                if p == 1 {
                    return;
                }
                acc.fill(0.0);
                for w in 1..p {
                    walk_contribution(temp, paths, f, kernel, j as u32, w);
                    for (a, (&t, &b)) in acc.iter_mut().zip(temp.iter().zip(out_row.iter())) {
                        *a += t - b;
                    }
                }
                let inv = p as f64;
                for (o, &a) in out_row.iter_mut().zip(acc.iter()) {
                    *o += a / inv;
                }
            },
        );
    out
}

/// Exact adjoint of [`path_conv_forward`] through the same path set.
/// Returns `(grad_f, grad_kernel)`; `grad_kernel` is slice-shaped (`k` for
/// shared, `c*k` for per-channel). The scatter into `grad_f` runs
/// sequentially in `(origin, walk, step)` order, so it is deterministic.
pub fn path_conv_backward(
    paths: &PathSet,
    f: &FeatureMatrix,
    kernel: &KernelSlice,
    grad_out: &FeatureMatrix,
) -> (FeatureMatrix, Vec<f64>) {
    let n = paths.node_count();
    assert_eq!(f.rows(), n);
    assert_eq!(grad_out.rows(), n);
    assert_eq!(grad_out.cols(), f.cols());
    let (p, k) = (paths.walks_per_node(), paths.length());
    assert_eq!(kernel.length(), k);
    let c = f.cols();
    let inv_p = 1.0 / p as f64;
    let mut grad_f = FeatureMatrix::zeros(n, c);
    let mut grad_s = vec![0.0; kernel.grad_len()];
    match kernel {
        KernelSlice::Shared(s) => {
            for j in 0..n {
                for w in 0..p {
                    let walk = paths.walk(j as u32, w);
                    for (i, &v) in walk.iter().enumerate() {
                        let coef = inv_p * s[i];
                        let mut ds = 0.0;
                        {
                            let src = f.row(v as usize);
                            let go = grad_out.row(j);
                            for (ch, &g) in go.iter().enumerate() {
                                ds += g * src[ch];
                            }
                            let dst = grad_f.row_mut(v as usize);
                            for (d, &g) in dst.iter_mut().zip(go) {
                                *d += coef * g;
                            }
                        }
                        grad_s[i] += inv_p * ds;
                    }
                }
            }
        }
        KernelSlice::PerChannel { weights, .. } => {
            for j in 0..n {
                for w in 0..p {
                    let walk = paths.walk(j as u32, w);
                    for (i, &v) in walk.iter().enumerate() {
                        let src = f.row(v as usize);
                        let go = grad_out.row(j);
                        for ch in 0..c {
                            let g = go[ch];
                            grad_s[ch * k + i] += inv_p * g * src[ch];
                        }
                        let dst = grad_f.row_mut(v as usize);
                        for (ch, (d, &g)) in dst.iter_mut().zip(go).enumerate() {
                            *d += inv_p * weights[ch * k + i] * g;
                        }
                    }
                }
            }
        }
    }
    (grad_f, grad_s)
}

/// Scales `src` by the step-`i` kernel weight (per channel where the kernel
/// is per-channel) and adds it into `acc`.
fn add_step_scaled(
    acc: &mut FeatureMatrix,
    src: &FeatureMatrix,
    kernel: &KernelSlice,
    step: usize,
) {
    let c = src.cols();
    match kernel {
        KernelSlice::Shared(s) => {
            let coef = s[step];
            for (a, &v) in acc.data_mut().iter_mut().zip(src.data()) {
                *a += coef * v;
            }
        }
        KernelSlice::PerChannel { weights, .. } => {
            let k = weights.len() / c;
            for (row, (a, v)) in acc
                .data_mut()
                .chunks_mut(c)
                .zip(src.data().chunks(c))
                .enumerate()
            {
                let _ = row;
                for (ch, (ai, &vi)) in a.iter_mut().zip(v).enumerate() {
                    *ai += weights[ch * k + step] * vi;
                }
            }
        }
    }
}

/// Per-channel inner products `<src, grad_out>` accumulated into the
/// step-`i` kernel gradient entries.
fn accumulate_step_grad(
    grad_s: &mut [f64],
    src: &FeatureMatrix,
    grad_out: &FeatureMatrix,
    kernel: &KernelSlice,
    step: usize,
) {
    let c = src.cols();
    match kernel {
        KernelSlice::Shared(_) => {
            let mut acc = 0.0;
            for (&a, &b) in src.data().iter().zip(grad_out.data()) {
                acc += a * b;
            }
            grad_s[step] += acc;
        }
        KernelSlice::PerChannel { weights, .. } => {
            let k = weights.len() / c;
            for (srow, grow) in src.data().chunks(c).zip(grad_out.data().chunks(c)) {
                for (ch, (&a, &b)) in srow.iter().zip(grow).enumerate() {
                    grad_s[ch * k + step] += a * b;
                }
            }
        }
    }
}

/// Deterministic path convolution: `sum_i s_i M^i f` with `M` the
/// walk-expectation operator, computed by `k-1` successive applications.
pub fn expected_conv(g: &Graph, f: &FeatureMatrix, kernel: &KernelSlice) -> FeatureMatrix {
    assert_eq!(f.rows(), g.node_count());
    if let KernelSlice::PerChannel { channels, .. } = kernel {
        assert_eq!(*channels, f.cols());
    }
    let k = kernel.length();
    let mut out = FeatureMatrix::zeros(f.rows(), f.cols());
    add_step_scaled(&mut out, f, kernel, 0);
    let mut power = f.clone();
    for i in 1..k {
        power = g.walk_expectation_apply(&power);
        add_step_scaled(&mut out, &power, kernel, i);
    }
    out
}

/// Exact adjoint of [`expected_conv`]: `grad_f = sum_i s_i (M^T)^i g` with
/// `M^T = A D^-1` applied by `transition_apply`; kernel gradients are the
/// per-step inner products `<M^i f, g>`. Returns `(grad_f, grad_kernel)`.
pub fn expected_conv_backward(
    g: &Graph,
    f: &FeatureMatrix,
    kernel: &KernelSlice,
    grad_out: &FeatureMatrix,
) -> (FeatureMatrix, Vec<f64>) {
    assert_eq!(f.rows(), g.node_count());
    assert_eq!(grad_out.rows(), f.rows());
    assert_eq!(grad_out.cols(), f.cols());
    let k = kernel.length();
    let mut grad_f = FeatureMatrix::zeros(f.rows(), f.cols());
    let mut grad_s = vec![0.0; kernel.grad_len()];
    add_step_scaled(&mut grad_f, grad_out, kernel, 0);
    accumulate_step_grad(&mut grad_s, f, grad_out, kernel, 0);
    let mut back = grad_out.clone();
    let mut fwd = f.clone();
    for i in 1..k {
        back = g.transition_apply(&back);
        fwd = g.walk_expectation_apply(&fwd);
        add_step_scaled(&mut grad_f, &back, kernel, i);
        accumulate_step_grad(&mut grad_s, &fwd, grad_out, kernel, i);
    }
    (grad_f, grad_s)
}

/// Root-mean-square gap between the stochastic convolution at each walk
/// budget and the deterministic expectation. Pairs `(p, rmse)`; seeds are
/// derived per budget so the runs are independent.
pub fn monte_carlo_error(
    g: &Graph,
    f: &FeatureMatrix,
    kernel: &KernelSlice,
    seed: u64,
    walk_budgets: &[usize],
) -> Vec<(usize, f64)> {
    let target = expected_conv(g, f, kernel);
    walk_budgets
        .iter()
        .map(|&p| {
            let cfg = WalkConfig {
                length: kernel.length(),
                walks_per_node: p,
                seed: derive_seed(seed, p as u64),
            };
            let stoch = path_conv_forward(&PathSet::sample(g, &cfg), f, kernel);
            let mut sq = 0.0;
            for (&a, &b) in stoch.data().iter().zip(target.data()) {
                sq += (a - b) * (a - b);
            }
            (p, (sq / stoch.data().len() as f64).sqrt())
        })
        .collect()
}

/// Least-squares slope of `ln(err)` against `ln(p)`. A Monte-Carlo
/// estimator converging at the canonical rate gives roughly -1/2.
pub fn log_log_slope(points: &[(usize, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(_, e)| e > 0.0)
        .map(|&(p, e)| ((p as f64).ln(), e.ln()))
        .collect();
    let n = pts.len() as f64;
    let (sx, sy): (f64, f64) = pts.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let (sxx, sxy): (f64, f64) =
        pts.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x * x, b + x * y));
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Per-origin spatial footprint of the stochastic operator: how much weight
/// each graph node contributes to `out[origin][channel]` under this path
/// set. `weight(v) = (1/p) * sum_{w,i: walk[i]=v} s[(ch,) i]`.
pub fn effective_kernel_stochastic(
    paths: &PathSet,
    kernel: &KernelSlice,
    origin: u32,
    channel: usize,
) -> BTreeMap<u32, f64> {
    let (p, _k) = (paths.walks_per_node(), paths.length());
    let inv_p = 1.0 / p as f64;
    let mut weights = BTreeMap::new();
    for w in 0..p {
        for (i, &v) in paths.walk(origin, w).iter().enumerate() {
            *weights.entry(v).or_insert(0.0) += inv_p * kernel.weight(channel, i);
        }
    }
    weights
}

/// Deterministic footprint: `weight(v) = sum_i s[(ch,) i] * P(X_i = v)` for
/// a uniform walk started at `origin`. The occupancy distribution evolves
/// by `transition_apply` (mass-conserving), so the weights of step `i` sum
/// to exactly `s_i`. The stochastic footprint converges to this one as the
/// walk budget grows.
pub fn effective_kernel_deterministic(
    g: &Graph,
    kernel: &KernelSlice,
    origin: u32,
    channel: usize,
) -> BTreeMap<u32, f64> {
    let n = g.node_count();
    assert!((origin as usize) < n, "origin out of range");
    let k = kernel.length();
    let mut dist = FeatureMatrix::zeros(n, 1);
    dist.set(origin as usize, 0, 1.0);
    let mut weights = BTreeMap::new();
    for i in 0..k {
        let coef = kernel.weight(channel, i);
        for v in 0..n {
            let mass = dist.get(v, 0);
            if mass != 0.0 {
                *weights.entry(v as u32).or_insert(0.0) += coef * mass;
            }
        }
        if i + 1 < k {
            dist = g.transition_apply(&dist);
        }
    }
    weights
}
