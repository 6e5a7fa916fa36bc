//! The small neural-net toolkit around the path convolution: 1x1 (pointwise)
//! convolutions, ReLU, inverted dropout, masked softmax cross-entropy, and
//! Adam with per-group learning rate and coupled weight decay.
//!
//! Everything here is hand-derived and exactly adjoint to its forward pass.
//! Randomness (init, dropout) is seeded; dropout masks are counter-based
//! (a pure function of seed and flat index), so they cost nothing to store
//! and evaluate identically at any thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::matrix::FeatureMatrix;
use crate::sampler::derive_seed;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("non-finite gradient in parameter {name}")]
    NonFiniteGradient { name: String },
    #[error("cross-entropy mask is empty")]
    EmptyMask,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
}

/// Which hyper-parameter group a tensor belongs to: the path-convolution
/// blocks (`Gcn`) or the opening/closing 1x1 layers (`Oc`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Gcn,
    Oc,
}

/// Weights and bias of one 1x1 convolution (a per-node linear map).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseParam {
    pub name: String,
    pub weights: FeatureMatrix,
    pub bias: Vec<f64>,
    pub group: ParamGroup,
}

impl DenseParam {
    /// Glorot-uniform init: weights in `+-sqrt(6/(in+out))`, zero bias.
    pub fn glorot(name: &str, input: usize, output: usize, group: ParamGroup, seed: u64) -> Self {
        let bound = (6.0 / (input + output) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..input * output)
            .map(|_| bound * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        Self {
            name: name.to_string(),
            weights: FeatureMatrix::from_vec(input, output, data),
            bias: vec![0.0; output],
            group,
        }
    }
}

/// Gradients for one [`DenseParam`].
#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrads {
    pub weights: FeatureMatrix,
    pub bias: Vec<f64>,
}

/// `f W + b`, bias broadcast over rows.
pub fn pointwise_forward(f: &FeatureMatrix, param: &DenseParam) -> FeatureMatrix {
    assert_eq!(f.cols(), param.weights.rows(), "pointwise input width mismatch");
    let mut out = f.matmul(&param.weights);
    let c = out.cols();
    out.data_mut().par_chunks_mut(c.max(1)).for_each(|row| {
        for (o, &b) in row.iter_mut().zip(&param.bias) {
            *o += b;
        }
    });
    out
}

/// Adjoint of [`pointwise_forward`]: `grad_W = f^T g`, `grad_b = column
/// sums of g`, `grad_f = g W^T` (skipped when `need_input_grad` is false,
/// e.g. for the layer that reads raw features).
pub fn pointwise_backward(
    f: &FeatureMatrix,
    param: &DenseParam,
    grad_out: &FeatureMatrix,
    need_input_grad: bool,
) -> (Option<FeatureMatrix>, DenseGrads) {
    assert_eq!(grad_out.rows(), f.rows());
    assert_eq!(grad_out.cols(), param.weights.cols());
    let grad_w = FeatureMatrix::transposed_matmul(f, grad_out);
    let mut grad_b = vec![0.0; grad_out.cols()];
    for i in 0..grad_out.rows() {
        for (b, &g) in grad_b.iter_mut().zip(grad_out.row(i)) {
            *b += g;
        }
    }
    let grad_f = need_input_grad.then(|| grad_out.matmul_rhs_transposed(&param.weights));
    (grad_f, DenseGrads { weights: grad_w, bias: grad_b })
}

/// Elementwise `max(0, x)`.
pub fn relu_forward(f: &FeatureMatrix) -> FeatureMatrix {
    let mut out = f.clone();
    out.data_mut().par_iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v = 0.0;
        }
    });
    out
}

/// ReLU subgradient: passes `grad` where the forward OUTPUT is positive,
/// zero elsewhere (the kink at 0 takes subgradient 0).
pub fn relu_backward(output: &FeatureMatrix, grad_out: &FeatureMatrix) -> FeatureMatrix {
    assert_eq!(output.rows(), grad_out.rows());
    assert_eq!(output.cols(), grad_out.cols());
    let mut grad = grad_out.clone();
    grad.data_mut()
        .par_iter_mut()
        .zip(output.data().par_iter())
        .for_each(|(g, &o)| {
            if o <= 0.0 {
                *g = 0.0;
            }
        });
    grad
}

/// Seeded Bernoulli keep-mask matching one activation shape. Entries are
/// `1/(1-p_drop)` (kept, inverted scaling) or `0` (dropped), evaluated on
/// demand as a pure function of `(seed, flat index)`.
#[derive(Clone, Copy, Debug)]
pub struct DropoutMask {
    rows: usize,
    cols: usize,
    keep_prob: f64,
    scale: f64,
    seed: u64,
}

impl DropoutMask {
    pub fn new(rows: usize, cols: usize, p_drop: f64, seed: u64) -> Self {
        assert!((0.0..1.0).contains(&p_drop), "p_drop must be in [0, 1)");
        let keep_prob = 1.0 - p_drop;
        Self { rows, cols, keep_prob, scale: 1.0 / keep_prob, seed }
    }

    /// Mask value at flat index: `scale` if kept, `0` if dropped. `p_drop
    /// == 0` keeps everything with scale 1 exactly.
    #[inline]
    pub fn entry(&self, idx: usize) -> f64 {
        if self.keep_prob == 1.0 {
            return 1.0;
        }
        let u = (derive_seed(self.seed, idx as u64) >> 11) as f64 / (1u64 << 53) as f64;
        if u < self.keep_prob {
            self.scale
        } else {
            0.0
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Full mask as a matrix (tests, inspection).
    pub fn materialize(&self) -> FeatureMatrix {
        let mut out = FeatureMatrix::zeros(self.rows, self.cols);
        for idx in 0..self.rows * self.cols {
            out.data_mut()[idx] = self.entry(idx);
        }
        out
    }
}

/// Inverted dropout: multiplies by the mask so that the kept entries are
/// scaled by `1/(1-p_drop)` and the expectation is the identity.
pub fn dropout_forward(f: &FeatureMatrix, p_drop: f64, seed: u64) -> (FeatureMatrix, DropoutMask) {
    let mask = DropoutMask::new(f.rows(), f.cols(), p_drop, seed);
    let mut out = f.clone();
    let cols = f.cols().max(1);
    out.data_mut()
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(row, chunk)| {
            let base = row * cols;
            for (off, v) in chunk.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v *= mask.entry(base + off);
                }
            }
        });
    (out, mask)
}

/// Adjoint of [`dropout_forward`] under the same mask.
pub fn dropout_backward(mask: &DropoutMask, grad_out: &FeatureMatrix) -> FeatureMatrix {
    assert_eq!((grad_out.rows(), grad_out.cols()), (mask.rows, mask.cols));
    let mut grad = grad_out.clone();
    let cols = mask.cols.max(1);
    grad.data_mut()
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(row, chunk)| {
            let base = row * cols;
            for (off, g) in chunk.iter_mut().enumerate() {
                if *g != 0.0 {
                    *g *= mask.entry(base + off);
                }
            }
        });
    grad
}

/// Mean softmax cross-entropy over the masked rows, with its gradient.
/// Rows are stabilized by their max before exponentiation. The gradient is
/// `(softmax - onehot) / |mask|` on masked rows and zero elsewhere.
pub fn masked_cross_entropy(
    logits: &FeatureMatrix,
    labels: &[usize],
    mask: &[u32],
) -> Result<(f64, FeatureMatrix), NnError> {
    assert_eq!(labels.len(), logits.rows(), "one label per node");
    if mask.is_empty() {
        return Err(NnError::EmptyMask);
    }
    let classes = logits.cols();
    let inv = 1.0 / mask.len() as f64;
    let mut grad = FeatureMatrix::zeros(logits.rows(), classes);
    let mut loss = 0.0;
    for &node in mask {
        let j = node as usize;
        let label = labels[j];
        if label >= classes {
            return Err(NnError::LabelOutOfRange { label, classes });
        }
        let row = logits.row(j);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut denom = 0.0;
        for &v in row {
            denom += (v - max).exp();
        }
        loss += denom.ln() - (row[label] - max);
        let grow = grad.row_mut(j);
        for (ch, g) in grow.iter_mut().enumerate() {
            let softmax = (row[ch] - max).exp() / denom;
            *g = (softmax - if ch == label { 1.0 } else { 0.0 }) * inv;
        }
    }
    Ok((loss * inv, grad))
}

/// Fraction of masked rows whose argmax (lowest index on ties) matches the
/// label.
pub fn masked_accuracy(logits: &FeatureMatrix, labels: &[usize], mask: &[u32]) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    let mut hits = 0usize;
    for &node in mask {
        let j = node as usize;
        let row = logits.row(j);
        let mut best = 0usize;
        for (ch, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = ch;
            }
        }
        if best == labels[j] {
            hits += 1;
        }
    }
    hits as f64 / mask.len() as f64
}

/// Per-group Adam hyper-parameters. Weight decay is coupled: it is added
/// into the gradient (`g + wd * theta`) before the moment updates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub weight_decay: f64,
}

/// One tensor's first/second moment buffers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam with the standard constants (beta1 0.9, beta2 0.999, eps 1e-8) and
/// a step counter shared by all tensors. Call [`Adam::begin_step`] once per
/// optimization step, then [`Adam::update`] for each tensor.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new(param_lens: &[usize]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            states: param_lens
                .iter()
                .map(|&len| AdamState { m: vec![0.0; len], v: vec![0.0; len] })
                .collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Updates tensor `idx` in place. Rejects non-finite gradients before
    /// touching any state, so a failed step leaves parameters and moments
    /// unchanged.
    pub fn update(
        &mut self,
        idx: usize,
        name: &str,
        theta: &mut [f64],
        grad: &[f64],
        hyper: AdamHyper,
    ) -> Result<(), NnError> {
        assert!(self.step > 0, "begin_step must run before update");
        let state = &mut self.states[idx];
        assert_eq!(theta.len(), grad.len());
        assert_eq!(theta.len(), state.m.len(), "tensor length changed");
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient { name: name.to_string() });
        }
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((th, &g), (m, v)) in theta
            .iter_mut()
            .zip(grad)
            .zip(state.m.iter_mut().zip(state.v.iter_mut()))
        {
            let g = g + hyper.weight_decay * *th;
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *th -= hyper.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}
