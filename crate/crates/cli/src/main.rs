//! Command-line surface: train, evaluate, verify, dump effective kernels,
//! benchmark, and generate synthetic bundles. Every failure exits nonzero
//! with a single machine-parsable line on stderr.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pathgcn_core::conv::{self, KernelVariant};
use pathgcn_core::model::{ConvMode, EvalReport, ModelConfig, PathGcnModel};
use pathgcn_core::sampler::{derive_seed, PathSet, WalkConfig};
use pathgcn_core::synth;
use pathgcn_core::verify;
use pathgcn_core::{GraphBundle, Split};

#[derive(Parser)]
#[command(name = "pathgcn", version, about = "Path-based graph convolution toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a bundle and write report, summary, and checkpoint
    Train(TrainArgs),
    /// Score a trained checkpoint on a bundle split
    Eval(EvalArgs),
    /// Run the convergence, adjoint, and equivalence suites
    Verify(VerifyArgs),
    /// Write effective kernel weights (stochastic and deterministic) as CSV
    KernelDump(KernelDumpArgs),
    /// Measure median phase timings
    Bench(BenchArgs),
    /// Generate a synthetic bundle
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Global,
    PerLayer,
    DepthWise,
}

impl From<VariantArg> for KernelVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Global => KernelVariant::Global,
            VariantArg::PerLayer => KernelVariant::PerLayer,
            VariantArg::DepthWise => KernelVariant::DepthWise,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Stochastic,
    Deterministic,
}

impl From<ModeArg> for ConvMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Stochastic => ConvMode::Stochastic,
            ModeArg::Deterministic => ConvMode::Deterministic,
        }
    }
}

/// Model configuration: JSON file plus individual flag overrides.
#[derive(Args)]
struct ConfigArgs {
    /// JSON config file; omitted fields take the built-in defaults
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    variant: Option<VariantArg>,
    #[arg(long)]
    path_length: Option<usize>,
    #[arg(long)]
    paths_per_node: Option<usize>,
    #[arg(long)]
    p_drop: Option<f64>,
    /// Initial-residual mix toward the post-embedding activation
    #[arg(long)]
    alpha: Option<f64>,
    /// Identity-mapping decay; layer l blends its dense map with strength ln(lambda/(l+1) + 1)
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lr_gcn: Option<f64>,
    #[arg(long)]
    wd_gcn: Option<f64>,
    #[arg(long)]
    lr_oc: Option<f64>,
    #[arg(long)]
    wd_oc: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Convolution mode for training and default inference
    #[arg(long)]
    mode: Option<ModeArg>,
}

impl ConfigArgs {
    fn build(&self) -> Result<ModelConfig, String> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| format!("config {}: {e}", path.display()))?;
                serde_json::from_str(&text)
                    .map_err(|e| format!("config {}: {e}", path.display()))?
            }
            None => ModelConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.layers {
            cfg.layers = v;
        }
        if let Some(v) = self.channels {
            cfg.channels = v;
        }
        if let Some(v) = self.variant {
            cfg.variant = v.into();
        }
        if let Some(v) = self.path_length {
            cfg.path_length = v;
        }
        if let Some(v) = self.paths_per_node {
            cfg.paths_per_node = v;
        }
        if let Some(v) = self.p_drop {
            cfg.p_drop = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.lr_gcn {
            cfg.lr_gcn = v;
        }
        if let Some(v) = self.wd_gcn {
            cfg.wd_gcn = v;
        }
        if let Some(v) = self.lr_oc {
            cfg.lr_oc = v;
        }
        if let Some(v) = self.wd_oc {
            cfg.wd_oc = v;
        }
        if let Some(v) = self.max_epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = self.patience {
            cfg.patience = v;
        }
        if let Some(v) = self.mode {
            cfg.mode = v.into();
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Bundle directory
    #[arg(long)]
    bundle: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory for report.csv, summary.json, model.ckpt
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Which split object of splits.json to train on
    #[arg(long, default_value_t = 0)]
    split_index: usize,
    /// Train once per split and also write an aggregate summary
    #[arg(long)]
    all_splits: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// stochastic averages --repeats runs; deterministic is a single pass
    #[arg(long, value_enum, default_value_t = ModeArg::Deterministic)]
    mode: ModeArg,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    split_index: usize,
    /// Which node set to score
    #[arg(long, value_enum, default_value_t = SetArg::Test)]
    set: SetArg,
    /// Write the JSON result here as well as stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SetArg {
    Train,
    Val,
    Test,
}

#[derive(Args)]
struct VerifyArgs {
    /// Graph family for the Monte-Carlo suite (only erdos_renyi)
    #[arg(long, default_value = "erdos_renyi")]
    graph: String,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0.025)]
    edge_prob: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct KernelDumpArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    bundle: PathBuf,
    /// Origin nodes, comma separated (e.g. 0,17,42)
    #[arg(long)]
    nodes: String,
    #[arg(long, default_value_t = 0)]
    layer: usize,
    #[arg(long, default_value_t = 0)]
    channel: usize,
    /// Walks per origin for the stochastic column
    #[arg(long, default_value_t = 1000)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    split_index: usize,
    /// JSON output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// two_cliques | erdos_renyi | star | path | cycle | karate
    #[arg(long)]
    kind: String,
    /// Node count (total; two_cliques uses n/2 per clique, karate is fixed)
    #[arg(long, default_value_t = 20)]
    n: usize,
    /// Edge probability for erdos_renyi
    #[arg(long, default_value_t = 0.05)]
    prob: f64,
    /// Feature noise amplitude for two_cliques
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bundle output directory
    #[arg(long)]
    out: PathBuf,
}

fn load_split(bundle: &GraphBundle, index: usize) -> Result<&Split, String> {
    bundle.splits.get(index).ok_or_else(|| {
        format!("split index {index} out of range; bundle has {} splits", bundle.splits.len())
    })
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
        }
    }
    fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

fn train_one(
    bundle: &GraphBundle,
    cfg: ModelConfig,
    split: &Split,
    out_dir: &Path,
) -> Result<f64, String> {
    let mut model = PathGcnModel::new(cfg, bundle.features.cols(), bundle.num_classes)
        .map_err(|e| e.to_string())?;
    let report = model
        .train(&bundle.graph, &bundle.features, &bundle.labels, split)
        .map_err(|e| e.to_string())?;
    write_file(&out_dir.join("report.csv"), report.csv())?;
    write_file(&out_dir.join("summary.json"), report.summary_json())?;
    model
        .save_checkpoint(out_dir.join("model.ckpt"))
        .map_err(|e| e.to_string())?;
    Ok(report.test_accuracy)
}

fn cmd_train(args: TrainArgs) -> Result<String, String> {
    let bundle = GraphBundle::load(&args.bundle).map_err(|e| e.to_string())?;
    let cfg = args.config.build()?;
    if args.all_splits {
        let mut accs = Vec::new();
        for (i, split) in bundle.splits.iter().enumerate() {
            let dir = args.out.join(format!("split-{i}"));
            accs.push(train_one(&bundle, cfg.clone(), split, &dir)?);
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        let std = if accs.len() > 1 {
            (accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>()
                / (accs.len() - 1) as f64)
                .sqrt()
        } else {
            0.0
        };
        let summary = serde_json::to_string_pretty(&serde_json::json!({
            "mean_test_accuracy": mean,
            "std_test_accuracy": std,
            "per_split": accs,
        }))
        .expect("summary serializes")
            + "\n";
        write_file(&args.out.join("summary.json"), &summary)?;
        Ok(summary)
    } else {
        let split = load_split(&bundle, args.split_index)?;
        train_one(&bundle, cfg, split, &args.out)?;
        let summary = fs::read_to_string(args.out.join("summary.json"))
            .map_err(|e| format!("summary.json: {e}"))?;
        Ok(summary)
    }
}

fn cmd_eval(args: EvalArgs) -> Result<String, String> {
    let bundle = GraphBundle::load(&args.bundle).map_err(|e| e.to_string())?;
    let model = PathGcnModel::load_checkpoint(&args.checkpoint).map_err(|e| e.to_string())?;
    let split = load_split(&bundle, args.split_index)?;
    let nodes = match args.set {
        SetArg::Train => &split.train,
        SetArg::Val => &split.val,
        SetArg::Test => &split.test,
    };
    let mode: ConvMode = args.mode.into();
    let EvalReport { mean, std, runs } = model
        .evaluate(&bundle.graph, &bundle.features, &bundle.labels, nodes, mode, args.repeats)
        .map_err(|e| e.to_string())?;
    let text = serde_json::to_string_pretty(&serde_json::json!({
        "accuracy_mean": mean,
        "accuracy_std": std,
        "runs": runs,
        "mode": match mode {
            ConvMode::Stochastic => "stochastic",
            ConvMode::Deterministic => "deterministic",
        },
        "set": format!("{:?}", args.set).to_lowercase(),
    }))
    .expect("eval result serializes")
        + "\n";
    if let Some(out) = &args.out {
        write_file(out, &text)?;
    }
    Ok(text)
}

fn cmd_verify(args: VerifyArgs) -> Result<String, String> {
    if args.graph != "erdos_renyi" {
        return Err(format!("unsupported verify graph {:?}; use erdos_renyi", args.graph));
    }
    let report = verify::run_all(args.n, args.edge_prob, args.seed);
    let text = report.render();
    if report.all_passed() {
        Ok(text)
    } else {
        // The rendered lines identify the failing suites; print them on
        // stdout and fail with a one-line reason.
        print!("{text}");
        Err("verification suites failed".into())
    }
}

fn cmd_kernel_dump(args: KernelDumpArgs) -> Result<String, String> {
    let bundle = GraphBundle::load(&args.bundle).map_err(|e| e.to_string())?;
    let model = PathGcnModel::load_checkpoint(&args.checkpoint).map_err(|e| e.to_string())?;
    if args.layer >= model.kernel.layers() {
        return Err(format!(
            "layer {} out of range; model has {} kernel layers",
            args.layer,
            model.kernel.layers()
        ));
    }
    if args.channel >= model.config.channels {
        return Err(format!(
            "channel {} out of range; model has {} channels",
            args.channel, model.config.channels
        ));
    }
    if args.paths == 0 {
        return Err("paths must be >= 1".into());
    }
    let n = bundle.graph.node_count();
    let mut origins = Vec::new();
    for tok in args.nodes.split(',') {
        let node: u32 = tok
            .trim()
            .parse()
            .map_err(|_| format!("bad node id {tok:?} in --nodes"))?;
        if node as usize >= n {
            return Err(format!("node {node} out of range for {n} nodes"));
        }
        origins.push(node);
    }
    if origins.is_empty() {
        return Err("--nodes must list at least one origin".into());
    }

    let slice = model.kernel.slice(args.layer);
    let cfg = WalkConfig {
        length: model.config.path_length,
        walks_per_node: args.paths,
        seed: derive_seed(args.seed, args.layer as u64),
    };
    let paths = PathSet::sample(&bundle.graph, &cfg);
    let mut csv = String::from("origin,node_id,weight_stochastic,weight_deterministic\n");
    for &origin in &origins {
        let sto = conv::effective_kernel_stochastic(&paths, &slice, origin, args.channel);
        let det =
            conv::effective_kernel_deterministic(&bundle.graph, &slice, origin, args.channel);
        let mut nodes: Vec<u32> = sto.keys().chain(det.keys()).copied().collect();
        nodes.sort_unstable();
        nodes.dedup();
        for v in nodes {
            writeln!(
                csv,
                "{origin},{v},{},{}",
                sto.get(&v).copied().unwrap_or(0.0),
                det.get(&v).copied().unwrap_or(0.0)
            )
            .expect("string write");
        }
    }
    if let Some(out) = &args.out {
        write_file(out, &csv)?;
    }
    Ok(csv)
}

fn cmd_bench(args: BenchArgs) -> Result<String, String> {
    let bundle = GraphBundle::load(&args.bundle).map_err(|e| e.to_string())?;
    let cfg = args.config.build()?;
    let split = load_split(&bundle, args.split_index)?;
    let model = PathGcnModel::new(cfg, bundle.features.cols(), bundle.num_classes)
        .map_err(|e| e.to_string())?;
    let report = model
        .benchmark(&bundle.graph, &bundle.features, &bundle.labels, split, args.reps)
        .map_err(|e| e.to_string())?;
    let text =
        serde_json::to_string_pretty(&report).expect("bench report serializes") + "\n";
    if let Some(out) = &args.out {
        write_file(out, &text)?;
    }
    Ok(text)
}

fn cmd_synth(args: SynthArgs) -> Result<String, String> {
    let dataset = match args.kind.as_str() {
        "two_cliques" => {
            if args.n < 4 || args.n % 2 != 0 {
                return Err("two_cliques needs an even --n of at least 4".into());
            }
            synth::two_cliques(args.n / 2, args.noise, args.seed)
        }
        "erdos_renyi" => {
            if !(0.0..=1.0).contains(&args.prob) {
                return Err("--prob must be in [0, 1]".into());
            }
            synth::structural_dataset(synth::erdos_renyi(args.n, args.prob, args.seed), None)
        }
        "star" => {
            if args.n < 2 {
                return Err("star needs --n of at least 2".into());
            }
            synth::structural_dataset(synth::star(args.n), None)
        }
        "path" => {
            if args.n < 2 {
                return Err("path needs --n of at least 2".into());
            }
            synth::structural_dataset(synth::path(args.n), None)
        }
        "cycle" => {
            if args.n < 3 {
                return Err("cycle needs --n of at least 3".into());
            }
            synth::structural_dataset(synth::cycle(args.n), None)
        }
        "karate" => {
            synth::structural_dataset(synth::karate_like(), Some(synth::karate_factions()))
        }
        other => {
            return Err(format!(
                "unknown kind {other:?}; use two_cliques|erdos_renyi|star|path|cycle|karate"
            ))
        }
    };
    let bundle = GraphBundle::from_synth(&args.kind, dataset);
    bundle.save(&args.out).map_err(|e| e.to_string())?;
    Ok(format!(
        "wrote {} bundle: {} nodes, {} edges, {} classes -> {}\n",
        args.kind,
        bundle.graph.node_count(),
        bundle.graph.edge_count(),
        bundle.num_classes,
        args.out.display()
    ))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Verify(args) => cmd_verify(args),
        Command::KernelDump(args) => cmd_kernel_dump(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(reason) => {
            let one_line = reason.replace('\n', " ");
            eprintln!("error: {one_line}");
            ExitCode::FAILURE
        }
    }
}
