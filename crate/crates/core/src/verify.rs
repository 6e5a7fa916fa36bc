//! Self-contained verification suites: Monte-Carlo convergence of the
//! stochastic convolution, exhaustive-walk equivalence on small graphs,
//! adjoint identities, and finite-difference gradient checks from the
//! layer level up to the whole model. The `verify` CLI command and the
//! acceptance tests both call these functions, so there is exactly one
//! definition of each check.

use crate::conv::{self, KernelSlice};
use crate::graph::Graph;
use crate::matrix::FeatureMatrix;
use crate::model::{ModelConfig, ModelGrads, PathGcnModel};
use crate::nn;
use crate::sampler::{derive_seed, mix64, PathSet, WalkConfig};
use crate::synth;

/// Outcome of one named check.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One line per check, stable order.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("{tag} {}: {}\n", c.name, c.detail));
        }
        out
    }
}

fn unit_floats(seed: u64, count: usize) -> Vec<f64> {
    let mut state = seed;
    (0..count)
        .map(|_| {
            state = mix64(state.wrapping_add(1));
            (state >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect()
}

fn rand_features(n: usize, c: usize, seed: u64) -> FeatureMatrix {
    FeatureMatrix::from_vec(n, c, unit_floats(seed, n * c).into_iter().map(|u| u - 0.5).collect())
}

fn dot(a: &FeatureMatrix, b: &FeatureMatrix) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Least-squares line through `(ln x, ln y)`; returns (slope, intercept).
fn log_log_fit(points: &[(usize, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = ((x as f64).ln(), y.max(f64::MIN_POSITIVE).ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

/// Monte-Carlo convergence of the stochastic convolution toward the exact
/// expectation: the log-log slope of RMS error against the walk budget
/// must sit near -1/2, and the largest budget must not stray above ten
/// times the fitted line.
pub fn monte_carlo_convergence(n: usize, edge_prob: f64, seed: u64) -> Check {
    let g = synth::erdos_renyi(n, edge_prob, derive_seed(seed, 1));
    let f = rand_features(n, 4, derive_seed(seed, 2));
    let k = 5;
    let mut weights: Vec<f64> =
        unit_floats(derive_seed(seed, 3), k).into_iter().map(|u| 2.0 * u - 1.0).collect();
    let norm: f64 = weights.iter().map(|w| w.abs()).sum();
    for w in &mut weights {
        *w /= norm;
    }
    let kernel = KernelSlice::Shared(&weights);

    let budgets = [10usize, 100, 1_000, 10_000];
    let errors = conv::monte_carlo_error(&g, &f, &kernel, derive_seed(seed, 4), &budgets);
    let (slope, intercept) = log_log_fit(&errors);
    let last = errors.last().expect("nonempty budgets");
    let predicted = (intercept + slope * (last.0 as f64).ln()).exp();
    let slope_ok = (-0.65..=-0.35).contains(&slope);
    let tail_ok = last.1 < 10.0 * predicted;
    Check::new(
        "monte_carlo_convergence",
        slope_ok && tail_ok,
        format!(
            "slope {slope:.4} (want [-0.65,-0.35]); rmse@{} {:.3e} vs fitted {:.3e}",
            last.0, last.1, predicted
        ),
    )
}

/// Expected convolution by brute force: enumerate every length-`k` walk
/// from each origin with its probability and sum the weighted features.
pub fn enumerate_expected(g: &Graph, f: &FeatureMatrix, kernel: &KernelSlice) -> FeatureMatrix {
    let n = g.node_count();
    let c = f.cols();
    let k = kernel.length();
    let mut out = FeatureMatrix::zeros(n, c);

    fn recurse(
        g: &Graph,
        f: &FeatureMatrix,
        kernel: &KernelSlice,
        walk: &mut Vec<u32>,
        prob: f64,
        k: usize,
        out_row: &mut [f64],
    ) {
        if walk.len() == k {
            for (i, &v) in walk.iter().enumerate() {
                let row = f.row(v as usize);
                for (ch, o) in out_row.iter_mut().enumerate() {
                    *o += prob * kernel.weight(ch, i) * row[ch];
                }
            }
            return;
        }
        let cur = *walk.last().expect("walk starts at the origin");
        let nbrs = g.neighbors(cur);
        if nbrs.is_empty() {
            walk.push(cur);
            recurse(g, f, kernel, walk, prob, k, out_row);
            walk.pop();
        } else {
            let step = prob / nbrs.len() as f64;
            for &nb in nbrs {
                walk.push(nb);
                recurse(g, f, kernel, walk, step, k, out_row);
                walk.pop();
            }
        }
    }

    for j in 0..n {
        let mut walk = vec![j as u32];
        let mut row = vec![0.0; c];
        recurse(g, f, kernel, &mut walk, 1.0, k, &mut row);
        out.row_mut(j).copy_from_slice(&row);
    }
    out
}

fn connected(n: usize, edges: &[(u32, u32)]) -> bool {
    if n == 0 {
        return false;
    }
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u as usize].push(v as usize);
        adj[v as usize].push(u as usize);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

/// Checks the closed-form expectation against walk enumeration on every
/// connected graph with at most `max_nodes` nodes, for every walk length
/// up to `max_k`, with both shared and per-channel kernels.
pub fn exhaustive_walk_equivalence(max_nodes: usize, max_k: usize) -> Check {
    let mut graphs = 0usize;
    let mut worst = 0.0f64;
    for n in 1..=max_nodes {
        let pairs: Vec<(u32, u32)> =
            (0..n as u32).flat_map(|u| ((u + 1)..n as u32).map(move |v| (u, v))).collect();
        for mask in 0..(1u32 << pairs.len()) {
            let edges: Vec<(u32, u32)> = pairs
                .iter()
                .enumerate()
                .filter(|&(i, _)| mask >> i & 1 == 1)
                .map(|(_, &e)| e)
                .collect();
            if !connected(n, &edges) {
                continue;
            }
            graphs += 1;
            let g = Graph::from_edge_list(n, &edges).expect("enumerated edges are valid");
            let c = 2;
            let f = rand_features(n, c, mix64(mask as u64 ^ (n as u64) << 32));
            for k in 1..=max_k {
                let shared: Vec<f64> = unit_floats(mix64(mask as u64 + k as u64), k)
                    .into_iter()
                    .map(|u| 2.0 * u - 1.0)
                    .collect();
                let per: Vec<f64> = unit_floats(mix64(mask as u64 + 7 * k as u64), c * k)
                    .into_iter()
                    .map(|u| 2.0 * u - 1.0)
                    .collect();
                for kernel in [
                    KernelSlice::Shared(&shared),
                    KernelSlice::PerChannel { weights: &per, channels: c },
                ] {
                    let fast = conv::expected_conv(&g, &f, &kernel);
                    let slow = enumerate_expected(&g, &f, &kernel);
                    worst = worst.max(fast.max_abs_diff(&slow));
                }
            }
        }
    }
    Check::new(
        "exhaustive_walk_equivalence",
        worst <= 1e-12,
        format!("{graphs} connected graphs up to {max_nodes} nodes, worst diff {worst:.3e}"),
    )
}

/// Linearity adjoints: the inner product must transfer exactly through
/// both convolution forms and the one-step walk operators.
pub fn adjoint_identities(seed: u64) -> Check {
    let g = synth::erdos_renyi(30, 0.15, derive_seed(seed, 1));
    let f = rand_features(30, 5, derive_seed(seed, 2));
    let cot = rand_features(30, 5, derive_seed(seed, 3));
    let mut worst = 0.0f64;

    let m_f = g.walk_expectation_apply(&f);
    let mt_c = g.transition_apply(&cot);
    worst = worst.max((dot(&m_f, &cot) - dot(&f, &mt_c)).abs());

    let weights: Vec<f64> =
        unit_floats(derive_seed(seed, 4), 4).into_iter().map(|u| 2.0 * u - 1.0).collect();
    let kernel = KernelSlice::Shared(&weights);

    let cfg = WalkConfig { length: 4, walks_per_node: 3, seed: derive_seed(seed, 5) };
    let paths = PathSet::sample(&g, &cfg);
    let fwd = conv::path_conv_forward(&paths, &f, &kernel);
    let (grad_f, _) = conv::path_conv_backward(&paths, &f, &kernel, &cot);
    worst = worst.max((dot(&fwd, &cot) - dot(&f, &grad_f)).abs());

    let efwd = conv::expected_conv(&g, &f, &kernel);
    let (egrad_f, _) = conv::expected_conv_backward(&g, &f, &kernel, &cot);
    worst = worst.max((dot(&efwd, &cot) - dot(&f, &egrad_f)).abs());

    Check::new(
        "adjoint_identities",
        worst <= 1e-10,
        format!("worst inner-product gap {worst:.3e}"),
    )
}

/// Finite-difference checks of the individual layers (pointwise conv and
/// masked cross-entropy) at absolute tolerance 1e-6.
pub fn layer_gradient_checks(seed: u64) -> Check {
    let h = 1e-5;
    let mut worst = 0.0f64;

    let param = nn::DenseParam::glorot(
        "probe",
        4,
        3,
        nn::ParamGroup::Gcn,
        derive_seed(seed, 1),
    );
    let f = rand_features(6, 4, derive_seed(seed, 2));
    let probe = rand_features(6, 3, derive_seed(seed, 3));
    let loss = |p: &nn::DenseParam, f: &FeatureMatrix| dot(&nn::pointwise_forward(f, p), &probe);
    let (grad_f, grads) = nn::pointwise_backward(&f, &param, &probe, true);
    let grad_f = grad_f.expect("input grad requested");
    for idx in 0..param.weights.data().len() {
        let mut pp = param.clone();
        pp.weights.data_mut()[idx] += h;
        let mut pm = param.clone();
        pm.weights.data_mut()[idx] -= h;
        let fd = (loss(&pp, &f) - loss(&pm, &f)) / (2.0 * h);
        worst = worst.max((fd - grads.weights.data()[idx]).abs());
    }
    for idx in 0..param.bias.len() {
        let mut pp = param.clone();
        pp.bias[idx] += h;
        let mut pm = param.clone();
        pm.bias[idx] -= h;
        let fd = (loss(&pp, &f) - loss(&pm, &f)) / (2.0 * h);
        worst = worst.max((fd - grads.bias[idx]).abs());
    }
    for idx in 0..f.data().len() {
        let mut fp = f.clone();
        fp.data_mut()[idx] += h;
        let mut fm = f.clone();
        fm.data_mut()[idx] -= h;
        let fd = (loss(&param, &fp) - loss(&param, &fm)) / (2.0 * h);
        worst = worst.max((fd - grad_f.data()[idx]).abs());
    }

    let logits = rand_features(5, 3, derive_seed(seed, 4));
    let labels = vec![0usize, 2, 1, 0, 2];
    let mask = vec![0u32, 1, 3, 4];
    let (_, grad) = nn::masked_cross_entropy(&logits, &labels, &mask).expect("valid mask");
    for idx in 0..logits.data().len() {
        let mut lp = logits.clone();
        lp.data_mut()[idx] += h;
        let mut lm = logits.clone();
        lm.data_mut()[idx] -= h;
        let (a, _) = nn::masked_cross_entropy(&lp, &labels, &mask).expect("valid mask");
        let (b, _) = nn::masked_cross_entropy(&lm, &labels, &mask).expect("valid mask");
        worst = worst.max(((a - b) / (2.0 * h) - grad.data()[idx]).abs());
    }

    Check::new(
        "layer_gradient_checks",
        worst <= 1e-6,
        format!("worst layer-level deviation {worst:.3e}"),
    )
}

fn tensor_count(model: &PathGcnModel) -> usize {
    5 + 2 * model.blocks.len()
}

fn tensor_mut(model: &mut PathGcnModel, t: usize) -> &mut [f64] {
    let blocks = model.blocks.len();
    match t {
        0 => model.embedding.weights.data_mut(),
        1 => &mut model.embedding.bias,
        t if t < 2 + 2 * blocks => {
            let l = (t - 2) / 2;
            if (t - 2) % 2 == 0 {
                model.blocks[l].weights.data_mut()
            } else {
                &mut model.blocks[l].bias
            }
        }
        t if t == 2 + 2 * blocks => model.kernel.weights_mut(),
        t if t == 3 + 2 * blocks => model.classifier.weights.data_mut(),
        _ => &mut model.classifier.bias,
    }
}

fn tensor_grad<'a>(grads: &'a ModelGrads, blocks: usize, t: usize) -> &'a [f64] {
    match t {
        0 => grads.embedding.weights.data(),
        1 => &grads.embedding.bias,
        t if t < 2 + 2 * blocks => {
            let l = (t - 2) / 2;
            if (t - 2) % 2 == 0 {
                grads.blocks[l].weights.data()
            } else {
                &grads.blocks[l].bias
            }
        }
        t if t == 2 + 2 * blocks => &grads.kernel,
        t if t == 3 + 2 * blocks => grads.classifier.weights.data(),
        _ => &grads.classifier.bias,
    }
}

/// End-to-end finite-difference check on a 12-node instance: every tensor
/// of a 2-block depth-wise model (k=3, p=2, fixed paths, dropout off) must
/// match central differences at relative error below 1e-4.
pub fn end_to_end_gradient_check(seed: u64) -> Check {
    let g = synth::erdos_renyi(12, 0.3, derive_seed(seed, 1));
    let x = rand_features(12, 6, derive_seed(seed, 2));
    let labels: Vec<usize> =
        unit_floats(derive_seed(seed, 3), 12).into_iter().map(|u| (u * 3.0) as usize % 3).collect();
    let mask = vec![0u32, 2, 5, 7, 9, 11];
    let cfg = ModelConfig {
        channels: 4,
        layers: 2,
        path_length: 3,
        paths_per_node: 2,
        p_drop: 0.0,
        seed: derive_seed(seed, 4),
        ..ModelConfig::default()
    };
    let model = PathGcnModel::new(cfg, 6, 3).expect("valid config");
    let paths = model.sample_paths(&g, derive_seed(seed, 5), 0);

    let (_, grads) = model
        .fixed_path_grads(&g, &x, &labels, &mask, &paths)
        .expect("gradients on the fixed instance");
    let h = 1e-5;
    let mut worst = 0.0f64;
    let blocks = model.blocks.len();
    for t in 0..tensor_count(&model) {
        let len = tensor_grad(&grads, blocks, t).len();
        for idx in 0..len {
            let mut plus = model.clone();
            tensor_mut(&mut plus, t)[idx] += h;
            let mut minus = model.clone();
            tensor_mut(&mut minus, t)[idx] -= h;
            let lp = plus.fixed_path_loss(&g, &x, &labels, &mask, &paths).expect("loss");
            let lm = minus.fixed_path_loss(&g, &x, &labels, &mask, &paths).expect("loss");
            let fd = (lp - lm) / (2.0 * h);
            let an = tensor_grad(&grads, blocks, t)[idx];
            let denom = fd.abs().max(an.abs());
            if denom > 1e-10 {
                worst = worst.max((fd - an).abs() / denom);
            }
        }
    }
    Check::new(
        "end_to_end_gradient_check",
        worst < 1e-4,
        format!("worst relative error {worst:.3e} over {} tensors", tensor_count(&model)),
    )
}

/// Closed-form unit examples: one Adam step, a confident cross-entropy,
/// and the dropout mask alphabet.
pub fn nn_unit_examples() -> Check {
    let mut detail = Vec::new();
    let mut ok = true;

    let mut adam = nn::Adam::new(&[1]);
    let mut theta = [1.0];
    adam.begin_step();
    adam.update(0, "t", &mut theta, &[1.0], nn::AdamHyper { lr: 0.1, weight_decay: 0.0 })
        .expect("finite gradient");
    let want = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8));
    let adam_ok = (theta[0] - want).abs() < 1e-15;
    ok &= adam_ok;
    detail.push(format!("adam step gap {:.1e}", (theta[0] - want).abs()));

    let logits = FeatureMatrix::from_rows(&[vec![10.0, -10.0]]);
    let (loss, _) = nn::masked_cross_entropy(&logits, &[0], &[0]).expect("valid mask");
    let ce_ok = (loss - (1.0 + (-20.0f64).exp()).ln()).abs() < 1e-18;
    ok &= ce_ok;
    detail.push(format!("ce example {loss:.3e}"));

    let probe = FeatureMatrix::from_vec(100, 100, vec![1.0; 10_000]);
    let (dropped, _) = nn::dropout_forward(&probe, 0.4, 99);
    let scale = 1.0 / 0.6;
    let alphabet_ok =
        dropped.data().iter().all(|&v| v == 0.0 || (v - scale).abs() < 1e-15);
    let kept = dropped.data().iter().filter(|&&v| v != 0.0).count() as f64 / 1e4;
    let frac_ok = (kept - 0.6).abs() < 0.02;
    ok &= alphabet_ok && frac_ok;
    detail.push(format!("dropout kept fraction {kept:.3}"));

    Check::new("nn_unit_examples", ok, detail.join("; "))
}

/// Runs every suite with derived seeds. `n` and `edge_prob` parametrize
/// the Monte-Carlo graph.
pub fn run_all(n: usize, edge_prob: f64, seed: u64) -> VerifyReport {
    VerifyReport {
        checks: vec![
            monte_carlo_convergence(n, edge_prob, derive_seed(seed, 100)),
            exhaustive_walk_equivalence(5, 3),
            adjoint_identities(derive_seed(seed, 101)),
            layer_gradient_checks(derive_seed(seed, 102)),
            end_to_end_gradient_check(derive_seed(seed, 103)),
            nn_unit_examples(),
        ],
    }
}
