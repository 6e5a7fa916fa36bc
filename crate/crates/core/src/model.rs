//! The full model: dropout -> 1x1 embedding -> ReLU -> L blocks of
//! (path convolution -> 1x1 -> ReLU) -> dropout -> 1x1 classifier, with
//! full-batch Adam training, early stopping on validation accuracy, and
//! stochastic or deterministic convolution in both training and inference.
//!
//! Everything a run emits (report, summary, checkpoint) is a pure function
//! of the config seed, so identical runs produce byte-identical artifacts.
//! Wall-clock numbers live only in [`BenchReport`].

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::Split;
use crate::conv::{self, KernelVariant, SpatialKernel};
use crate::graph::Graph;
use crate::matrix::FeatureMatrix;
use crate::nn::{self, Adam, AdamHyper, DenseGrads, DenseParam, DropoutMask, ParamGroup};
use crate::sampler::{derive_seed, PathSet, WalkConfig};

// Salt indices for deriving independent seed streams from the config seed.
const SEED_EMBEDDING: u64 = 1;
const SEED_CLASSIFIER: u64 = 2;
const SEED_KERNEL: u64 = 3;
const SEED_TRAIN_PATHS: u64 = 4;
const SEED_DROPOUT: u64 = 5;
const SEED_EVAL_PATHS: u64 = 6;
const SEED_BLOCK_BASE: u64 = 16;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{what}: got {got}, expected {want}")]
    ShapeMismatch { what: &'static str, got: usize, want: usize },
    #[error("non-finite activation after layer {layer}")]
    NonFiniteActivation { layer: usize },
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error("evaluation node set is empty")]
    EmptyNodeSet,
    #[error(transparent)]
    Nn(#[from] nn::NnError),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
}

/// How the path convolution is evaluated: sampled walks (fresh per step)
/// or the exact walk expectation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvMode {
    Stochastic,
    Deterministic,
}

/// Architecture and training hyper-parameters. The defaults are the
/// citation-network starting point (64 channels, 2 depth-wise blocks,
/// k = p = 5, heavy input dropout, split learning rates).
///
/// `alpha` and `lambda` control the block skeleton: each block mixes its
/// path convolution with the initial embedding (`alpha`) and decays the
/// weight of its dense map with depth (`beta_l = ln(lambda / l + 1)`).
/// Without both anchors a deep plain stack collapses from over-smoothing
/// and dead units; with them depth stays benign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub channels: usize,
    pub layers: usize,
    pub variant: KernelVariant,
    pub path_length: usize,
    pub paths_per_node: usize,
    pub p_drop: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub lr_gcn: f64,
    pub wd_gcn: f64,
    pub lr_oc: f64,
    pub wd_oc: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub mode: ConvMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: 64,
            layers: 2,
            variant: KernelVariant::DepthWise,
            path_length: 5,
            paths_per_node: 5,
            p_drop: 0.6,
            alpha: 0.1,
            lambda: 0.25,
            lr_gcn: 1e-3,
            wd_gcn: 2e-5,
            lr_oc: 1e-2,
            wd_oc: 1e-5,
            max_epochs: 1500,
            patience: 100,
            seed: 0,
            mode: ConvMode::Stochastic,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::InvalidConfig(msg.to_string()));
        if self.channels == 0 {
            return bad("channels must be >= 1");
        }
        if self.path_length == 0 {
            return bad("path_length must be >= 1");
        }
        if self.paths_per_node == 0 {
            return bad("paths_per_node must be >= 1");
        }
        if !(0.0..1.0).contains(&self.p_drop) {
            return bad("p_drop must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must be in [0, 1]");
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return bad("lambda must be finite and >= 0");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1");
        }
        for (name, v) in [
            ("lr_gcn", self.lr_gcn),
            ("wd_gcn", self.wd_gcn),
            ("lr_oc", self.lr_oc),
            ("wd_oc", self.wd_oc),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(ModelError::InvalidConfig(format!(
                    "{name} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }
}

/// Gradients for every tensor, in the model's fixed tensor order.
#[derive(Clone, Debug)]
pub struct ModelGrads {
    pub embedding: DenseGrads,
    pub blocks: Vec<DenseGrads>,
    pub kernel: Vec<f64>,
    pub classifier: DenseGrads,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_accuracy: f64,
}

/// Everything a training run produced. Contains no wall-clock values, so
/// identical seeded runs serialize identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub best_val_loss: f64,
    pub test_accuracy: f64,
}

impl TrainReport {
    /// Per-epoch CSV, `epoch,loss,val_acc`. Reals use the shortest
    /// round-trip decimal form, so the text is deterministic.
    pub fn csv(&self) -> String {
        let mut out = String::from("epoch,loss,val_acc\n");
        for r in &self.epochs {
            out.push_str(&format!("{},{},{}\n", r.epoch, r.loss, r.val_accuracy));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        let v = serde_json::json!({
            "best_epoch": self.best_epoch,
            "best_val_accuracy": self.best_val_accuracy,
            "best_val_loss": self.best_val_loss,
            "epochs_run": self.epochs.len(),
            "test_accuracy": self.test_accuracy,
        });
        serde_json::to_string_pretty(&v).expect("summary serializes") + "\n"
    }
}

/// Accuracy of an evaluation pass: one entry per repeat for stochastic
/// mode, a single entry for deterministic mode.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub mean: f64,
    pub std: f64,
    pub runs: Vec<f64>,
}

/// Median wall-clock milliseconds per phase.
#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub path_sampling_ms: f64,
    pub train_step_ms: f64,
    pub inference_deterministic_ms: f64,
    pub inference_stochastic_ms: f64,
    pub repetitions: usize,
}

enum ConvPlan<'a> {
    Paths(&'a [PathSet]),
    Expected,
}

/// Intermediate activations of one forward pass, enough to run the exact
/// backward pass. Dropout masks exist only on training passes; block
/// inputs are stored post-dropout because the conv adjoints need exactly
/// the matrices the forward pass consumed. `supports` holds each block's
/// residual-mixed conv output and `eff_blocks` the identity-mapped dense
/// parameters that transformed it.
struct Tape {
    x_in: FeatureMatrix,
    mask_in: Option<DropoutMask>,
    h0: FeatureMatrix,
    block_ins: Vec<FeatureMatrix>,
    block_masks: Vec<Option<DropoutMask>>,
    supports: Vec<FeatureMatrix>,
    eff_blocks: Vec<DenseParam>,
    acts: Vec<FeatureMatrix>,
    last: FeatureMatrix,
    mask_out: Option<DropoutMask>,
    logits: FeatureMatrix,
}

/// `a * x + b * y`, elementwise over equal-shape matrices.
fn lin_comb(a: f64, x: &FeatureMatrix, b: f64, y: &FeatureMatrix) -> FeatureMatrix {
    debug_assert_eq!((x.rows(), x.cols()), (y.rows(), y.cols()));
    let mut out = x.clone();
    for (o, yv) in out.data_mut().iter_mut().zip(y.data()) {
        *o = a * *o + b * *yv;
    }
    out
}

fn scaled(a: f64, x: &FeatureMatrix) -> FeatureMatrix {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v *= a;
    }
    out
}

struct Snapshot {
    embedding: DenseParam,
    blocks: Vec<DenseParam>,
    kernel: SpatialKernel,
    classifier: DenseParam,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathGcnModel {
    pub config: ModelConfig,
    pub in_channels: usize,
    pub num_classes: usize,
    pub embedding: DenseParam,
    pub blocks: Vec<DenseParam>,
    pub kernel: SpatialKernel,
    pub classifier: DenseParam,
}

fn check_finite(m: &FeatureMatrix, layer: usize) -> Result<(), ModelError> {
    if m.data().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFiniteActivation { layer })
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    let n = xs.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

impl PathGcnModel {
    pub fn new(
        config: ModelConfig,
        in_channels: usize,
        num_classes: usize,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        if in_channels == 0 || num_classes == 0 {
            return Err(ModelError::InvalidConfig(
                "in_channels and num_classes must be >= 1".into(),
            ));
        }
        let c = config.channels;
        let embedding = DenseParam::glorot(
            "embedding",
            in_channels,
            c,
            ParamGroup::Oc,
            derive_seed(config.seed, SEED_EMBEDDING),
        );
        let blocks = (0..config.layers)
            .map(|l| {
                DenseParam::glorot(
                    &format!("block{l}"),
                    c,
                    c,
                    ParamGroup::Gcn,
                    derive_seed(config.seed, SEED_BLOCK_BASE + l as u64),
                )
            })
            .collect();
        // A zero-block model keeps a one-layer kernel around unused; the
        // kernel type requires at least one layer.
        let kernel = SpatialKernel::init(
            config.variant,
            config.layers.max(1),
            c,
            config.path_length,
            derive_seed(config.seed, SEED_KERNEL),
        );
        let classifier = DenseParam::glorot(
            "classifier",
            c,
            num_classes,
            ParamGroup::Oc,
            derive_seed(config.seed, SEED_CLASSIFIER),
        );
        Ok(Self { config, in_channels, num_classes, embedding, blocks, kernel, classifier })
    }

    /// Dense-map strength of block `l` (0-based): `ln(lambda / (l+1) + 1)`,
    /// decaying with depth so late blocks stay near the identity.
    pub fn beta(&self, l: usize) -> f64 {
        (self.config.lambda / (l + 1) as f64).ln_1p()
    }

    /// The identity-mapped dense parameters of block `l`:
    /// `(1 - beta) I + beta W` with bias `beta b`. Forward and backward of
    /// the block's channel mixing run through this effective layer; the
    /// raw parameter gradients are the effective ones scaled by `beta`.
    fn effective_block(&self, l: usize) -> DenseParam {
        let beta = self.beta(l);
        let base = &self.blocks[l];
        let c = base.bias.len();
        let mut weights = base.weights.clone();
        for v in weights.data_mut() {
            *v *= beta;
        }
        for i in 0..c {
            let w = weights.get(i, i);
            weights.set(i, i, w + (1.0 - beta));
        }
        DenseParam {
            name: base.name.clone(),
            weights,
            bias: base.bias.iter().map(|b| beta * b).collect(),
            group: base.group,
        }
    }

    /// One fresh path set per block, on seed stream `root`, step `iteration`.
    pub fn sample_paths(&self, g: &Graph, root: u64, iteration: u64) -> Vec<PathSet> {
        (0..self.config.layers)
            .map(|l| {
                let cfg = WalkConfig {
                    length: self.config.path_length,
                    walks_per_node: self.config.paths_per_node,
                    seed: derive_seed(root, l as u64),
                };
                PathSet::resample(g, &cfg, iteration)
            })
            .collect()
    }

    fn forward_tape(
        &self,
        g: &Graph,
        x: &FeatureMatrix,
        plan: &ConvPlan,
        dropout_root: Option<u64>,
    ) -> Result<Tape, ModelError> {
        if x.rows() != g.node_count() {
            return Err(ModelError::ShapeMismatch {
                what: "feature rows",
                got: x.rows(),
                want: g.node_count(),
            });
        }
        if x.cols() != self.in_channels {
            return Err(ModelError::ShapeMismatch {
                what: "feature channels",
                got: x.cols(),
                want: self.in_channels,
            });
        }
        if let ConvPlan::Paths(ps) = plan {
            if ps.len() != self.config.layers {
                return Err(ModelError::ShapeMismatch {
                    what: "path sets",
                    got: ps.len(),
                    want: self.config.layers,
                });
            }
        }

        // Dropout precedes every learned layer (input, each block's conv,
        // the classifier); site `i` draws its mask from stream
        // `derive_seed(root, i)`.
        let site = |index: u64, m: &FeatureMatrix| match dropout_root {
            Some(root) => {
                let (dropped, mask) =
                    nn::dropout_forward(m, self.config.p_drop, derive_seed(root, index));
                (dropped, Some(mask))
            }
            None => (m.clone(), None),
        };

        let (x_in, mask_in) = site(0, x);
        let e = nn::pointwise_forward(&x_in, &self.embedding);
        check_finite(&e, 0)?;
        let h0 = nn::relu_forward(&e);

        let alpha = self.config.alpha;
        let layers = self.config.layers;
        let mut block_ins = Vec::with_capacity(layers);
        let mut block_masks = Vec::with_capacity(layers);
        let mut supports = Vec::with_capacity(layers);
        let mut eff_blocks = Vec::with_capacity(layers);
        let mut acts: Vec<FeatureMatrix> = Vec::with_capacity(layers);
        for l in 0..layers {
            let prev = if l == 0 { &h0 } else { &acts[l - 1] };
            let (b_in, b_mask) = site(1 + l as u64, prev);
            let slice = self.kernel.slice(l);
            let z = match plan {
                ConvPlan::Paths(ps) => conv::path_conv_forward(&ps[l], &b_in, &slice),
                ConvPlan::Expected => conv::expected_conv(g, &b_in, &slice),
            };
            let support = lin_comb(1.0 - alpha, &z, alpha, &h0);
            let eff = self.effective_block(l);
            let u = nn::pointwise_forward(&support, &eff);
            check_finite(&u, l + 1)?;
            acts.push(nn::relu_forward(&u));
            supports.push(support);
            eff_blocks.push(eff);
            block_ins.push(b_in);
            block_masks.push(b_mask);
        }

        let pre = acts.last().unwrap_or(&h0);
        let (last, mask_out) = site(layers as u64 + 1, pre);
        let logits = nn::pointwise_forward(&last, &self.classifier);
        check_finite(&logits, layers + 1)?;
        Ok(Tape {
            x_in,
            mask_in,
            h0,
            block_ins,
            block_masks,
            supports,
            eff_blocks,
            acts,
            last,
            mask_out,
            logits,
        })
    }

    fn backward_tape(&self, g: &Graph, plan: &ConvPlan, tape: &Tape, grad_logits: &FeatureMatrix) -> ModelGrads {
        let (g_last, classifier) =
            nn::pointwise_backward(&tape.last, &self.classifier, grad_logits, true);
        let mut grad = g_last.expect("classifier input gradient requested");
        if let Some(mask) = &tape.mask_out {
            grad = nn::dropout_backward(mask, &grad);
        }

        let alpha = self.config.alpha;
        let layers = self.config.layers;
        let mut blocks_rev = Vec::with_capacity(layers);
        let mut kernel = vec![0.0; self.kernel.weights().len()];
        // Every block's residual mix feeds a share of its gradient straight
        // back to the embedding activation, bypassing the chain.
        let mut g_h0_skip: Option<FeatureMatrix> = None;
        for l in (0..layers).rev() {
            let grad_u = nn::relu_backward(&tape.acts[l], &grad);
            let (g_support, eff_bg) =
                nn::pointwise_backward(&tape.supports[l], &tape.eff_blocks[l], &grad_u, true);
            let g_support = g_support.expect("block input gradient requested");
            let beta = self.beta(l);
            let mut bg = eff_bg;
            for v in bg.weights.data_mut() {
                *v *= beta;
            }
            for v in &mut bg.bias {
                *v *= beta;
            }
            g_h0_skip = Some(match g_h0_skip {
                Some(acc) => lin_comb(1.0, &acc, alpha, &g_support),
                None => scaled(alpha, &g_support),
            });
            let g_z = scaled(1.0 - alpha, &g_support);
            let slice = self.kernel.slice(l);
            let (g_in, g_s) = match plan {
                ConvPlan::Paths(ps) => {
                    conv::path_conv_backward(&ps[l], &tape.block_ins[l], &slice, &g_z)
                }
                ConvPlan::Expected => {
                    conv::expected_conv_backward(g, &tape.block_ins[l], &slice, &g_z)
                }
            };
            self.kernel.accumulate_layer_grad(l, &g_s, &mut kernel);
            blocks_rev.push(bg);
            grad = g_in;
            if let Some(mask) = &tape.block_masks[l] {
                grad = nn::dropout_backward(mask, &grad);
            }
        }
        blocks_rev.reverse();

        if let Some(skip) = g_h0_skip {
            grad = lin_comb(1.0, &grad, 1.0, &skip);
        }
        // The raw-feature gradient is never needed; input dropout has no
        // parameters, so the chain stops at the embedding weights.
        let grad_e = nn::relu_backward(&tape.h0, &grad);
        let (_, embedding) = nn::pointwise_backward(&tape.x_in, &self.embedding, &grad_e, false);
        let _ = &tape.mask_in;
        ModelGrads { embedding, blocks: blocks_rev, kernel, classifier }
    }

    /// Logits with the exact walk expectation; no dropout, no sampling.
    pub fn forward_deterministic(&self, g: &Graph, x: &FeatureMatrix) -> Result<FeatureMatrix, ModelError> {
        Ok(self.forward_tape(g, x, &ConvPlan::Expected, None)?.logits)
    }

    /// Logits with freshly sampled walks (evaluation seed stream keyed by
    /// `iteration`); dropout stays off.
    pub fn forward_stochastic(
        &self,
        g: &Graph,
        x: &FeatureMatrix,
        iteration: u64,
    ) -> Result<FeatureMatrix, ModelError> {
        let root = derive_seed(self.config.seed, SEED_EVAL_PATHS);
        let paths = self.sample_paths(g, root, iteration);
        Ok(self.forward_tape(g, x, &ConvPlan::Paths(&paths), None)?.logits)
    }

    /// Training loss on `mask` under the given fixed path sets, dropout
    /// off. Building block for gradient verification.
    pub fn fixed_path_loss(
        &self,
        g: &Graph,
        x: &FeatureMatrix,
        labels: &[usize],
        mask: &[u32],
        paths: &[PathSet],
    ) -> Result<f64, ModelError> {
        let tape = self.forward_tape(g, x, &ConvPlan::Paths(paths), None)?;
        let (loss, _) = nn::masked_cross_entropy(&tape.logits, labels, mask)?;
        Ok(loss)
    }

    /// Loss and exact gradients under fixed paths, dropout off.
    pub fn fixed_path_grads(
        &self,
        g: &Graph,
        x: &FeatureMatrix,
        labels: &[usize],
        mask: &[u32],
        paths: &[PathSet],
    ) -> Result<(f64, ModelGrads), ModelError> {
        let plan = ConvPlan::Paths(paths);
        let tape = self.forward_tape(g, x, &plan, None)?;
        let (loss, grad_logits) = nn::masked_cross_entropy(&tape.logits, labels, mask)?;
        Ok((loss, self.backward_tape(g, &plan, &tape, &grad_logits)))
    }

    fn tensor_lens(&self) -> Vec<usize> {
        let mut v = vec![self.embedding.weights.data().len(), self.embedding.bias.len()];
        for b in &self.blocks {
            v.push(b.weights.data().len());
            v.push(b.bias.len());
        }
        v.push(self.kernel.weights().len());
        v.push(self.classifier.weights.data().len());
        v.push(self.classifier.bias.len());
        v
    }

    fn apply_adam(&mut self, adam: &mut Adam, grads: &ModelGrads) -> Result<(), ModelError> {
        let oc = AdamHyper { lr: self.config.lr_oc, weight_decay: self.config.wd_oc };
        let gcn = AdamHyper { lr: self.config.lr_gcn, weight_decay: self.config.wd_gcn };
        adam.begin_step();
        let mut idx = 0;
        let mut step = |adam: &mut Adam, name: String, theta: &mut [f64], grad: &[f64], hyper| {
            let r = adam.update(idx, &name, theta, grad, hyper);
            idx += 1;
            r
        };
        step(adam, "embedding.weights".into(), self.embedding.weights.data_mut(), grads.embedding.weights.data(), oc)?;
        step(adam, "embedding.bias".into(), &mut self.embedding.bias, &grads.embedding.bias, oc)?;
        for (l, bg) in grads.blocks.iter().enumerate() {
            step(adam, format!("block{l}.weights"), self.blocks[l].weights.data_mut(), bg.weights.data(), gcn)?;
            step(adam, format!("block{l}.bias"), &mut self.blocks[l].bias, &bg.bias, gcn)?;
        }
        step(adam, "kernel".into(), self.kernel.weights_mut(), &grads.kernel, gcn)?;
        step(adam, "classifier.weights".into(), self.classifier.weights.data_mut(), grads.classifier.weights.data(), oc)?;
        step(adam, "classifier.bias".into(), &mut self.classifier.bias, &grads.classifier.bias, oc)?;
        Ok(())
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            embedding: self.embedding.clone(),
            blocks: self.blocks.clone(),
            kernel: self.kernel.clone(),
            classifier: self.classifier.clone(),
        }
    }

    fn restore(&mut self, s: Snapshot) {
        self.embedding = s.embedding;
        self.blocks = s.blocks;
        self.kernel = s.kernel;
        self.classifier = s.classifier;
    }

    /// Full-batch training. Each epoch takes one Adam step on the train
    /// mask (fresh paths per block in stochastic mode), then scores the
    /// validation set with the deterministic forward pass. Keeps the
    /// parameters of the best validation epoch (accuracy, ties broken by
    /// lower validation loss) and stops after `patience` non-improving
    /// epochs. Restores the best parameters before computing test accuracy.
    pub fn train(
        &mut self,
        g: &Graph,
        x: &FeatureMatrix,
        labels: &[usize],
        split: &Split,
    ) -> Result<TrainReport, ModelError> {
        self.config.validate()?;
        if labels.len() != g.node_count() {
            return Err(ModelError::ShapeMismatch {
                what: "labels",
                got: labels.len(),
                want: g.node_count(),
            });
        }
        split
            .validate(g.node_count(), 0)
            .map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
        if split.train.is_empty() || split.val.is_empty() {
            return Err(ModelError::InvalidConfig("train and val sets must be non-empty".into()));
        }

        let cfg = self.config.clone();
        let train_root = derive_seed(cfg.seed, SEED_TRAIN_PATHS);
        let drop_root = derive_seed(cfg.seed, SEED_DROPOUT);
        let mut adam = Adam::new(&self.tensor_lens());

        let mut best: Option<Snapshot> = None;
        let mut best_val_accuracy = f64::NEG_INFINITY;
        let mut best_val_loss = f64::INFINITY;
        let mut best_epoch = 0usize;
        let mut bad_epochs = 0usize;
        let mut epochs = Vec::new();

        for epoch in 1..=cfg.max_epochs {
            let paths = match cfg.mode {
                ConvMode::Stochastic => self.sample_paths(g, train_root, epoch as u64),
                ConvMode::Deterministic => Vec::new(),
            };
            let plan = match cfg.mode {
                ConvMode::Stochastic => ConvPlan::Paths(&paths),
                ConvMode::Deterministic => ConvPlan::Expected,
            };
            let epoch_drop = derive_seed(drop_root, epoch as u64);
            let tape = match self.forward_tape(g, x, &plan, Some(epoch_drop)) {
                Ok(t) => t,
                Err(ModelError::NonFiniteActivation { .. }) => {
                    return Err(ModelError::Diverged { epoch })
                }
                Err(e) => return Err(e),
            };
            let (loss, grad_logits) = nn::masked_cross_entropy(&tape.logits, labels, &split.train)?;
            if !loss.is_finite() {
                return Err(ModelError::Diverged { epoch });
            }
            let grads = self.backward_tape(g, &plan, &tape, &grad_logits);
            self.apply_adam(&mut adam, &grads)?;

            // Validation always scores the exact expectation, so the early
            // stopping signal carries no sampling noise.
            let val_logits = match self.forward_deterministic(g, x) {
                Ok(l) => l,
                Err(ModelError::NonFiniteActivation { .. }) => {
                    return Err(ModelError::Diverged { epoch })
                }
                Err(e) => return Err(e),
            };
            let val_accuracy = nn::masked_accuracy(&val_logits, labels, &split.val);
            let (val_loss, _) = nn::masked_cross_entropy(&val_logits, labels, &split.val)?;
            epochs.push(EpochRecord { epoch, loss, val_accuracy });

            let improved = val_accuracy > best_val_accuracy
                || (val_accuracy == best_val_accuracy && val_loss < best_val_loss);
            if improved {
                best_val_accuracy = val_accuracy;
                best_val_loss = val_loss;
                best_epoch = epoch;
                best = Some(self.snapshot());
                bad_epochs = 0;
            } else {
                bad_epochs += 1;
                if bad_epochs > cfg.patience {
                    break;
                }
            }
        }

        if let Some(s) = best {
            self.restore(s);
        }
        let test_logits = self.forward_deterministic(g, x)?;
        let test_accuracy = nn::masked_accuracy(&test_logits, labels, &split.test);
        Ok(TrainReport {
            epochs,
            best_epoch,
            best_val_accuracy,
            best_val_loss,
            test_accuracy,
        })
    }

    /// Accuracy on `nodes`. Deterministic mode is a single exact pass;
    /// stochastic mode averages `repeats` passes with fresh paths and
    /// reports the sample standard deviation.
    pub fn evaluate(
        &self,
        g: &Graph,
        x: &FeatureMatrix,
        labels: &[usize],
        nodes: &[u32],
        mode: ConvMode,
        repeats: usize,
    ) -> Result<EvalReport, ModelError> {
        if nodes.is_empty() {
            return Err(ModelError::EmptyNodeSet);
        }
        let runs = match mode {
            ConvMode::Deterministic => {
                let logits = self.forward_deterministic(g, x)?;
                vec![nn::masked_accuracy(&logits, labels, nodes)]
            }
            ConvMode::Stochastic => {
                let repeats = repeats.max(1);
                let mut runs = Vec::with_capacity(repeats);
                for r in 0..repeats {
                    let logits = self.forward_stochastic(g, x, r as u64)?;
                    runs.push(nn::masked_accuracy(&logits, labels, nodes));
                }
                runs
            }
        };
        let mean = runs.iter().sum::<f64>() / runs.len() as f64;
        let std = if runs.len() > 1 {
            let var = runs.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
                / (runs.len() - 1) as f64;
            var.sqrt()
        } else {
            0.0
        };
        Ok(EvalReport { mean, std, runs })
    }

    /// Median wall-clock cost of the three phases over `reps` repetitions:
    /// sampling one step's paths, one full training step (sampling
    /// excluded), and inference in both modes. Works on a clone; `self` is
    /// untouched.
    pub fn benchmark(
        &self,
        g: &Graph,
        x: &FeatureMatrix,
        labels: &[usize],
        split: &Split,
        reps: usize,
    ) -> Result<BenchReport, ModelError> {
        let reps = reps.max(1);
        let train_root = derive_seed(self.config.seed, SEED_TRAIN_PATHS);
        let ms = |t0: Instant| t0.elapsed().as_secs_f64() * 1e3;

        let mut t_sampling = Vec::with_capacity(reps);
        for r in 0..reps {
            let t0 = Instant::now();
            let ps = self.sample_paths(g, train_root, r as u64);
            std::hint::black_box(&ps);
            t_sampling.push(ms(t0));
        }

        let paths = self.sample_paths(g, train_root, 0);
        let mut worker = self.clone();
        let mut adam = Adam::new(&worker.tensor_lens());
        let drop_root = derive_seed(self.config.seed, SEED_DROPOUT);
        let mut t_step = Vec::with_capacity(reps);
        for r in 0..reps as u64 {
            let plan = match self.config.mode {
                ConvMode::Stochastic => ConvPlan::Paths(&paths),
                ConvMode::Deterministic => ConvPlan::Expected,
            };
            let t0 = Instant::now();
            let tape = worker.forward_tape(g, x, &plan, Some(derive_seed(drop_root, r)))?;
            let (loss, grad_logits) = nn::masked_cross_entropy(&tape.logits, labels, &split.train)?;
            let grads = worker.backward_tape(g, &plan, &tape, &grad_logits);
            worker.apply_adam(&mut adam, &grads)?;
            std::hint::black_box(loss);
            t_step.push(ms(t0));
        }

        let mut t_det = Vec::with_capacity(reps);
        for _ in 0..reps {
            let t0 = Instant::now();
            std::hint::black_box(self.forward_deterministic(g, x)?);
            t_det.push(ms(t0));
        }
        let mut t_sto = Vec::with_capacity(reps);
        for r in 0..reps {
            let t0 = Instant::now();
            std::hint::black_box(self.forward_stochastic(g, x, r as u64)?);
            t_sto.push(ms(t0));
        }

        Ok(BenchReport {
            path_sampling_ms: median(t_sampling),
            train_step_ms: median(t_step),
            inference_deterministic_ms: median(t_det),
            inference_stochastic_ms: median(t_sto),
            repetitions: reps,
        })
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"PATHGCN\0";
const CHECKPOINT_VERSION: u32 = 1;

fn push_tensor(buf: &mut Vec<u8>, data: &[f64]) {
    buf.extend_from_slice(&(data.len() as u64).to_le_bytes());
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn take<'a>(buf: &mut &'a [u8], len: usize) -> Result<&'a [u8], ModelError> {
    if buf.len() < len {
        return Err(ModelError::MalformedCheckpoint("truncated".into()));
    }
    let (head, tail) = buf.split_at(len);
    *buf = tail;
    Ok(head)
}

fn take_u64(buf: &mut &[u8]) -> Result<u64, ModelError> {
    Ok(u64::from_le_bytes(take(buf, 8)?.try_into().expect("8 bytes")))
}

fn take_tensor(buf: &mut &[u8], expect: usize, name: &str) -> Result<Vec<f64>, ModelError> {
    let len = take_u64(buf)? as usize;
    if len != expect {
        return Err(ModelError::MalformedCheckpoint(format!(
            "{name}: expected {expect} values, found {len}"
        )));
    }
    let raw = take(buf, len * 8)?;
    Ok(raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

impl PathGcnModel {
    /// Binary checkpoint: magic, version, config JSON, dimensions, then
    /// every tensor little-endian in the fixed tensor order. Identical
    /// models produce identical bytes.
    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let cfg = serde_json::to_vec(&self.config).expect("config serializes");
        buf.extend_from_slice(&(cfg.len() as u64).to_le_bytes());
        buf.extend_from_slice(&cfg);
        buf.extend_from_slice(&(self.in_channels as u64).to_le_bytes());
        buf.extend_from_slice(&(self.num_classes as u64).to_le_bytes());
        push_tensor(&mut buf, self.embedding.weights.data());
        push_tensor(&mut buf, &self.embedding.bias);
        for b in &self.blocks {
            push_tensor(&mut buf, b.weights.data());
            push_tensor(&mut buf, &b.bias);
        }
        push_tensor(&mut buf, self.kernel.weights());
        push_tensor(&mut buf, self.classifier.weights.data());
        push_tensor(&mut buf, &self.classifier.bias);
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let raw = fs::read(path)?;
        let mut buf = raw.as_slice();
        if take(&mut buf, 8)? != CHECKPOINT_MAGIC {
            return Err(ModelError::MalformedCheckpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(&mut buf, 4)?.try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::MalformedCheckpoint(format!(
                "unsupported version {version}"
            )));
        }
        let cfg_len = take_u64(&mut buf)? as usize;
        let config: ModelConfig = serde_json::from_slice(take(&mut buf, cfg_len)?)
            .map_err(|e| ModelError::MalformedCheckpoint(format!("config: {e}")))?;
        let in_channels = take_u64(&mut buf)? as usize;
        let num_classes = take_u64(&mut buf)? as usize;
        let mut model = Self::new(config, in_channels, num_classes)?;

        let w = take_tensor(&mut buf, model.embedding.weights.data().len(), "embedding.weights")?;
        model.embedding.weights.data_mut().copy_from_slice(&w);
        let b = take_tensor(&mut buf, model.embedding.bias.len(), "embedding.bias")?;
        model.embedding.bias.copy_from_slice(&b);
        for l in 0..model.blocks.len() {
            let w = take_tensor(&mut buf, model.blocks[l].weights.data().len(), "block.weights")?;
            model.blocks[l].weights.data_mut().copy_from_slice(&w);
            let b = take_tensor(&mut buf, model.blocks[l].bias.len(), "block.bias")?;
            model.blocks[l].bias.copy_from_slice(&b);
        }
        let k = take_tensor(&mut buf, model.kernel.weights().len(), "kernel")?;
        model.kernel.weights_mut().copy_from_slice(&k);
        let w = take_tensor(&mut buf, model.classifier.weights.data().len(), "classifier.weights")?;
        model.classifier.weights.data_mut().copy_from_slice(&w);
        let b = take_tensor(&mut buf, model.classifier.bias.len(), "classifier.bias")?;
        model.classifier.bias.copy_from_slice(&b);
        if !buf.is_empty() {
            return Err(ModelError::MalformedCheckpoint("trailing bytes".into()));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::mix64;
    use crate::synth;

    fn rand_features(n: usize, c: usize, seed: u64) -> FeatureMatrix {
        let mut state = seed;
        FeatureMatrix::from_vec(
            n,
            c,
            (0..n * c)
                .map(|_| {
                    state = mix64(state.wrapping_add(1));
                    (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                })
                .collect(),
        )
    }

    fn small_config() -> ModelConfig {
        ModelConfig {
            channels: 8,
            layers: 2,
            variant: KernelVariant::DepthWise,
            path_length: 3,
            paths_per_node: 2,
            p_drop: 0.0,
            max_epochs: 50,
            patience: 100,
            seed: 7,
            mode: ConvMode::Stochastic,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn zero_block_model_is_a_two_layer_mlp() {
        let g = synth::path(6);
        let x = rand_features(6, 4, 1);
        let cfg = ModelConfig { layers: 0, channels: 5, ..small_config() };
        let model = PathGcnModel::new(cfg, 4, 3).unwrap();
        let logits = model.forward_deterministic(&g, &x).unwrap();
        let manual = nn::pointwise_forward(
            &nn::relu_forward(&nn::pointwise_forward(&x, &model.embedding)),
            &model.classifier,
        );
        assert_eq!(logits, manual);
    }

    #[test]
    fn unit_length_paths_reduce_to_a_scaled_mlp() {
        // k=1 walks never leave the origin, so each conv scales channel ch
        // by s0; replaying the blocks per node (scale, residual mix, then
        // the identity-mapped dense) yields an ordinary per-node network
        // that must agree with both forward modes.
        let g = synth::erdos_renyi(9, 0.3, 4);
        let x = rand_features(9, 5, 2);
        let cfg = ModelConfig { path_length: 1, channels: 6, ..small_config() };
        let model = PathGcnModel::new(cfg, 5, 3).unwrap();
        let alpha = model.config.alpha;

        let h0 = nn::relu_forward(&nn::pointwise_forward(&x, &model.embedding));
        let mut h = h0.clone();
        for l in 0..model.config.layers {
            let mut z = h.clone();
            for ch in 0..model.config.channels {
                let s0 = match model.kernel.slice(l) {
                    crate::conv::KernelSlice::Shared(w) => w[0],
                    crate::conv::KernelSlice::PerChannel { weights, .. } => weights[ch],
                };
                for r in 0..z.rows() {
                    let v = z.get(r, ch) * s0;
                    z.set(r, ch, v);
                }
            }
            let support = lin_comb(1.0 - alpha, &z, alpha, &h0);
            let u = nn::pointwise_forward(&support, &model.effective_block(l));
            h = nn::relu_forward(&u);
        }
        let mlp = nn::pointwise_forward(&h, &model.classifier);

        let det = model.forward_deterministic(&g, &x).unwrap();
        assert!(det.max_abs_diff(&mlp) <= 1e-10, "det {}", det.max_abs_diff(&mlp));
        let sto = model.forward_stochastic(&g, &x, 0).unwrap();
        assert!(sto.max_abs_diff(&mlp) <= 1e-10, "sto {}", sto.max_abs_diff(&mlp));
    }

    #[test]
    fn deterministic_forward_is_pure() {
        let g = synth::erdos_renyi(12, 0.3, 1);
        let x = rand_features(12, 4, 5);
        let model = PathGcnModel::new(small_config(), 4, 3).unwrap();
        let a = model.forward_deterministic(&g, &x).unwrap();
        let b = model.forward_deterministic(&g, &x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stochastic_forward_approaches_deterministic() {
        let g = synth::erdos_renyi(50, 0.15, 9);
        let x = rand_features(50, 6, 3);
        let cfg = ModelConfig {
            channels: 8,
            paths_per_node: 10_000,
            ..small_config()
        };
        let model = PathGcnModel::new(cfg, 6, 4).unwrap();
        let det = model.forward_deterministic(&g, &x).unwrap();
        let sto = model.forward_stochastic(&g, &x, 0).unwrap();
        let rms = {
            let mut s = 0.0;
            for (a, b) in det.data().iter().zip(sto.data()) {
                s += (a - b) * (a - b);
            }
            (s / det.data().len() as f64).sqrt()
        };
        assert!(rms < 1e-2, "rms {rms}");
    }

    #[test]
    fn forward_rejects_shape_mismatches() {
        let g = synth::path(5);
        let model = PathGcnModel::new(small_config(), 4, 2).unwrap();
        let bad_rows = rand_features(4, 4, 1);
        assert!(matches!(
            model.forward_deterministic(&g, &bad_rows),
            Err(ModelError::ShapeMismatch { what: "feature rows", .. })
        ));
        let bad_cols = rand_features(5, 3, 1);
        assert!(matches!(
            model.forward_deterministic(&g, &bad_cols),
            Err(ModelError::ShapeMismatch { what: "feature channels", .. })
        ));
    }

    #[test]
    fn two_cliques_trains_to_perfect_test_accuracy() {
        let d = synth::two_cliques(10, 0.1, 7);
        let split = Split { train: d.train.clone(), val: d.val.clone(), test: d.test.clone() };
        let cfg = ModelConfig {
            channels: 8,
            layers: 1,
            path_length: 3,
            paths_per_node: 2,
            p_drop: 0.1,
            max_epochs: 200,
            ..ModelConfig::default()
        };
        let mut model = PathGcnModel::new(cfg, 2, 2).unwrap();
        let report = model.train(&d.graph, &d.features, &d.labels, &split).unwrap();
        assert_eq!(report.test_accuracy, 1.0, "report: {:?}", report.epochs.last());
        assert!(report.best_epoch <= 200);
    }

    #[test]
    fn zero_learning_rate_with_zero_patience_stops_after_two_epochs() {
        // With lr = 0 nothing changes, so epoch 2 cannot improve on epoch 1
        // and patience 0 must halt immediately.
        let d = synth::two_cliques(6, 0.1, 3);
        let split = Split { train: d.train.clone(), val: d.val.clone(), test: d.test.clone() };
        let cfg = ModelConfig {
            lr_gcn: 0.0,
            lr_oc: 0.0,
            wd_gcn: 0.0,
            wd_oc: 0.0,
            patience: 0,
            ..small_config()
        };
        let mut model = PathGcnModel::new(cfg, 2, 2).unwrap();
        let report = model.train(&d.graph, &d.features, &d.labels, &split).unwrap();
        assert_eq!(report.epochs.len(), 2);
        assert_eq!(report.best_epoch, 1);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let d = synth::two_cliques(8, 0.15, 5);
        let split = Split { train: d.train.clone(), val: d.val.clone(), test: d.test.clone() };
        let cfg = ModelConfig { p_drop: 0.3, max_epochs: 30, ..small_config() };
        let mut m1 = PathGcnModel::new(cfg.clone(), 2, 2).unwrap();
        let r1 = m1.train(&d.graph, &d.features, &d.labels, &split).unwrap();
        let mut m2 = PathGcnModel::new(cfg, 2, 2).unwrap();
        let r2 = m2.train(&d.graph, &d.features, &d.labels, &split).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(m1, m2);
        assert_eq!(r1.csv(), r2.csv());
        assert_eq!(r1.summary_json(), r2.summary_json());

        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        m1.save_checkpoint(&p1).unwrap();
        m2.save_checkpoint(&p2).unwrap();
        assert_eq!(fs::read(p1).unwrap(), fs::read(p2).unwrap());
    }

    #[test]
    fn divergent_training_reports_the_epoch() {
        let d = synth::two_cliques(6, 0.1, 3);
        let split = Split { train: d.train.clone(), val: d.val.clone(), test: d.test.clone() };
        // Adam bounds each step by the learning rate, so the weights jump
        // to ~1e200 after one epoch and the next forward pass overflows.
        let cfg = ModelConfig { lr_gcn: 1e200, lr_oc: 1e200, ..small_config() };
        let mut model = PathGcnModel::new(cfg, 2, 2).unwrap();
        match model.train(&d.graph, &d.features, &d.labels, &split) {
            Err(ModelError::Diverged { epoch }) => assert!(epoch >= 1 && epoch <= 10),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn permutation_of_nodes_permutes_logits() {
        let n = 10;
        let g = synth::erdos_renyi(n, 0.3, 2);
        let x = rand_features(n, 4, 8);
        let model = PathGcnModel::new(small_config(), 4, 3).unwrap();
        let base = model.forward_deterministic(&g, &x).unwrap();

        let perm: Vec<usize> = vec![3, 1, 7, 0, 9, 5, 2, 8, 4, 6];
        let mut edges = Vec::new();
        for u in 0..n as u32 {
            for &v in g.neighbors(u) {
                if v >= u {
                    edges.push((perm[u as usize] as u32, perm[v as usize] as u32));
                }
            }
        }
        let pg = Graph::from_edge_list(n, &edges).unwrap();
        let mut px = FeatureMatrix::zeros(n, 4);
        for j in 0..n {
            px.row_mut(perm[j]).copy_from_slice(x.row(j));
        }
        let permuted = model.forward_deterministic(&pg, &px).unwrap();
        for j in 0..n {
            for ch in 0..3 {
                let diff = (permuted.get(perm[j], ch) - base.get(j, ch)).abs();
                assert!(diff <= 1e-10, "node {j} ch {ch} diff {diff}");
            }
        }
    }

    #[test]
    fn evaluate_contract() {
        let d = synth::two_cliques(6, 0.1, 1);
        let model = PathGcnModel::new(small_config(), 2, 2).unwrap();
        let a = model
            .evaluate(&d.graph, &d.features, &d.labels, &d.test, ConvMode::Deterministic, 1)
            .unwrap();
        let b = model
            .evaluate(&d.graph, &d.features, &d.labels, &d.test, ConvMode::Deterministic, 1)
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.std, 0.0);

        let s = model
            .evaluate(&d.graph, &d.features, &d.labels, &d.test, ConvMode::Stochastic, 6)
            .unwrap();
        assert_eq!(s.runs.len(), 6);
        assert!(s.std >= 0.0 && s.std.is_finite());

        assert!(matches!(
            model.evaluate(&d.graph, &d.features, &d.labels, &[], ConvMode::Deterministic, 1),
            Err(ModelError::EmptyNodeSet)
        ));
    }

    #[test]
    fn checkpoint_roundtrip_and_byte_stability() {
        let model = PathGcnModel::new(small_config(), 4, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        model.save_checkpoint(&p).unwrap();
        let loaded = PathGcnModel::load_checkpoint(&p).unwrap();
        assert_eq!(model, loaded);

        let p2 = dir.path().join("m2.ckpt");
        loaded.save_checkpoint(&p2).unwrap();
        assert_eq!(fs::read(&p).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let model = PathGcnModel::new(small_config(), 4, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        model.save_checkpoint(&p).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        bytes[0] = b'X';
        let bad_magic = dir.path().join("bad1.ckpt");
        fs::write(&bad_magic, &bytes).unwrap();
        assert!(matches!(
            PathGcnModel::load_checkpoint(&bad_magic),
            Err(ModelError::MalformedCheckpoint(_))
        ));

        let mut truncated = fs::read(&p).unwrap();
        truncated.truncate(truncated.len() - 9);
        let bad2 = dir.path().join("bad2.ckpt");
        fs::write(&bad2, &truncated).unwrap();
        assert!(matches!(
            PathGcnModel::load_checkpoint(&bad2),
            Err(ModelError::MalformedCheckpoint(_))
        ));
    }

    #[test]
    fn config_json_roundtrip_with_defaults() {
        let parsed: ModelConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(parsed, ModelConfig::default());
        let partial: ModelConfig =
            serde_json::from_str(r#"{"layers": 4, "variant": "per_layer", "mode": "deterministic"}"#)
                .unwrap();
        assert_eq!(partial.layers, 4);
        assert_eq!(partial.variant, KernelVariant::PerLayer);
        assert_eq!(partial.mode, ConvMode::Deterministic);
        assert_eq!(partial.channels, 64);

        let text = serde_json::to_string(&partial).unwrap();
        let back: ModelConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, partial);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for patch in [
            ModelConfig { channels: 0, ..ModelConfig::default() },
            ModelConfig { path_length: 0, ..ModelConfig::default() },
            ModelConfig { paths_per_node: 0, ..ModelConfig::default() },
            ModelConfig { p_drop: 1.0, ..ModelConfig::default() },
            ModelConfig { p_drop: -0.1, ..ModelConfig::default() },
            ModelConfig { lr_gcn: f64::NAN, ..ModelConfig::default() },
            ModelConfig { max_epochs: 0, ..ModelConfig::default() },
        ] {
            assert!(patch.validate().is_err());
        }
    }

    #[test]
    fn benchmark_reports_positive_medians() {
        let d = synth::two_cliques(8, 0.1, 2);
        let split = Split { train: d.train.clone(), val: d.val.clone(), test: d.test.clone() };
        let model = PathGcnModel::new(small_config(), 2, 2).unwrap();
        let b = model.benchmark(&d.graph, &d.features, &d.labels, &split, 5).unwrap();
        assert!(b.path_sampling_ms >= 0.0);
        assert!(b.train_step_ms > 0.0);
        assert!(b.inference_deterministic_ms > 0.0);
        assert!(b.inference_stochastic_ms > 0.0);
        assert_eq!(b.repetitions, 5);
        let json = serde_json::to_string(&b).unwrap();
        assert!(json.contains("train_step_ms"));
    }

    #[test]
    fn report_csv_layout() {
        let report = TrainReport {
            epochs: vec![
                EpochRecord { epoch: 1, loss: 0.5, val_accuracy: 0.75 },
                EpochRecord { epoch: 2, loss: 0.25, val_accuracy: 1.0 },
            ],
            best_epoch: 2,
            best_val_accuracy: 1.0,
            best_val_loss: 0.2,
            test_accuracy: 0.9,
        };
        assert_eq!(report.csv(), "epoch,loss,val_acc\n1,0.5,0.75\n2,0.25,1\n");
        let summary = report.summary_json();
        assert!(summary.contains("\"best_epoch\": 2"));
        assert!(summary.contains("\"test_accuracy\": 0.9"));
    }
}
