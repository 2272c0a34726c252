use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use graph2d::benchmark::load_benchmark_dataset;
use graph2d::cnn::{load_checkpoint, predict, save_checkpoint, train, AdamConfig, TrainConfig};
use graph2d::compress::{compress_embeddings, PcaScope};
use graph2d::container::{manifest_path, read_manifest, write_manifest, TensorContainer};
use graph2d::embed::{
    embed_dataset, embeddings_from_container, embeddings_to_container, EmbeddingConfig, EmbeddingManifest, WalkConfig,
};
use graph2d::graph::{dataset_stats, DatasetStats, GraphDataset};
use graph2d::harness::{
    generate_synthetic_dataset, parse_class_specs, run_experiment, run_precomputed_kernel, CnnMethodConfig, CvConfig,
    EvalResult, KernelMethodConfig, MethodConfig, PRESETS,
};
use graph2d::kernels::{graphlet_kernel_matrix, wl_kernel_matrix, GraphletConfig, KernelMatrix, WlConfig};
use graph2d::raster::{
    compute_spec, images_from_container, images_to_container, rasterize_dataset, write_channel_pngs, ImageSpec,
};
use graph2d::svm::c_grid;

#[derive(Parser)]
#[command(name = "graph2d", version, about = "Graph classification with 2D CNNs and graph-kernel baselines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the summary-statistics CSV row of benchmark datasets.
    Stats {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
    /// Learn node2vec embeddings for every graph.
    Embed(EmbedArgs),
    /// Compress embeddings with PCA and bin them into multichannel images.
    Rasterize(RasterizeArgs),
    /// Train the CNN on an image container.
    Train(TrainArgs),
    /// Predict labels for an image container.
    Predict(PredictArgs),
    /// Compute a graphlet or WL kernel matrix.
    Kernel(KernelArgs),
    /// Cross-validate a C-SVM on a saved kernel matrix.
    SvmEval(SvmEvalArgs),
    /// Run repeated stratified cross-validation of one method.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct DatasetArg {
    /// Benchmark directory, or `synthetic:<spec>` such as
    /// `synthetic:er:60:0.1:100,ba:60:3:100`.
    #[arg(long)]
    dataset: String,
    /// Seed for synthetic datasets.
    #[arg(long, default_value_t = 42)]
    dataset_seed: u64,
}

impl DatasetArg {
    fn load(&self) -> Result<GraphDataset> {
        match self.dataset.strip_prefix("synthetic:") {
            Some(spec) => Ok(generate_synthetic_dataset(&parse_class_specs(spec)?, self.dataset_seed)?),
            None => {
                load_benchmark_dataset(Path::new(&self.dataset)).with_context(|| format!("loading {}", self.dataset))
            }
        }
    }
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    dataset: DatasetArg,
    #[arg(long)]
    out: PathBuf,
    /// Start from a named dataset preset's node2vec settings.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    walks_per_node: Option<usize>,
    #[arg(long)]
    walk_length: Option<usize>,
    #[arg(long)]
    context_size: Option<usize>,
    #[arg(long)]
    negative_samples: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Global,
    PerGraph,
}

impl From<ScopeArg> for PcaScope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::Global => PcaScope::Global,
            ScopeArg::PerGraph => PcaScope::PerGraph,
        }
    }
}

#[derive(Args)]
struct RasterizeArgs {
    #[command(flatten)]
    dataset: DatasetArg,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Compressed dimensions (even); images get half as many channels.
    #[arg(long, default_value_t = 10)]
    dims: usize,
    /// Bins per coordinate unit.
    #[arg(long, default_value_t = 14.0)]
    resolution: f64,
    /// Fix the side length instead of the resolution.
    #[arg(long)]
    image_size: Option<usize>,
    #[arg(long, value_enum, default_value_t = ScopeArg::Global)]
    pca_scope: ScopeArg,
    /// Scale each channel to unit sum when the images are used for training.
    #[arg(long)]
    normalize_histograms: bool,
    /// Write per-channel grayscale PNGs here.
    #[arg(long)]
    png_dir: Option<PathBuf>,
}

/// Stored next to an image container.
#[derive(Debug, Serialize, Deserialize)]
struct ImagesManifest {
    dataset: String,
    class_count: usize,
    spec: ImageSpec,
    pca_scope: PcaScope,
    normalize_histograms: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    images: PathBuf,
    /// Checkpoint path; the architecture manifest is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch history CSV.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.3)]
    dropout: f64,
    #[arg(long, default_value_t = 5)]
    patience: usize,
    #[arg(long, default_value_t = 0.001)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    #[arg(long, default_value_t = 100)]
    max_epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    validation_fraction: f64,
    #[arg(long, default_value_t = 128)]
    hidden: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            dropout: self.dropout,
            patience: self.patience,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.epsilon,
            },
            max_epochs: self.max_epochs,
            validation_fraction: self.validation_fraction,
            hidden: self.hidden,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    images: PathBuf,
    /// CSV of predictions; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelType {
    Graphlet,
    Wl,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long = "type", value_enum)]
    kind: KernelType,
    #[command(flatten)]
    dataset: DatasetArg,
    #[arg(long)]
    out: PathBuf,
    /// WL iterations.
    #[arg(long, default_value_t = 3)]
    iterations: usize,
    /// Graphlets sampled per graph.
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 3)]
    min_size: usize,
    #[arg(long, default_value_t = 6)]
    max_size: usize,
    /// Only count connected graphlets (rejection sampling).
    #[arg(long)]
    connected_only: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Append `dataset,seconds` to this CSV.
    #[arg(long)]
    timings: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0.1)]
    inner_validation: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl CvArgs {
    fn config(&self, global_preprocessing: bool) -> CvConfig {
        CvConfig {
            folds: self.folds,
            repeats: self.repeats,
            inner_validation: self.inner_validation,
            global_preprocessing,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct SvmEvalArgs {
    #[arg(long)]
    kernel_file: PathBuf,
    /// Supplies the labels; must be the dataset the kernel was built from.
    #[command(flatten)]
    dataset: DatasetArg,
    /// Comma-separated C values; ten log-spaced values in [1e-4, 1e4] by default.
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,
    #[command(flatten)]
    cv: CvArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Cnn,
    Wl,
    Graphlet,
    Majority,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    #[command(flatten)]
    dataset: DatasetArg,
    /// JSON method config; fields left out keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named CNN preset, used when no config file is given.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory for results.csv, summary.json, timings.csv and result.json.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Fit PCA and the image extent on all graphs instead of each training side.
    #[arg(long)]
    global_preprocessing: bool,
    /// result.json files of earlier runs to compare against.
    #[arg(long)]
    baseline: Vec<PathBuf>,
    #[command(flatten)]
    cv: CvArgs,
}

fn preset(name: &str) -> Result<CnnMethodConfig> {
    CnnMethodConfig::preset(name).with_context(|| format!("unknown preset {name:?}; known: {}", PRESETS.join(", ")))
}

fn stats(dirs: &[PathBuf]) -> Result<()> {
    println!("{}", DatasetStats::CSV_HEADER);
    for dir in dirs {
        let ds = load_benchmark_dataset(dir).with_context(|| format!("loading {}", dir.display()))?;
        println!("{}", dataset_stats(&ds).csv_row());
    }
    Ok(())
}

fn embed(args: &EmbedArgs) -> Result<()> {
    let ds = args.dataset.load()?;
    let base = match &args.preset {
        Some(name) => preset(name)?,
        None => CnnMethodConfig::default(),
    };
    let d = base.walk;
    let walk = WalkConfig {
        p: args.p.unwrap_or(d.p),
        q: args.q.unwrap_or(d.q),
        walks_per_node: args.walks_per_node.unwrap_or(d.walks_per_node),
        walk_length: args.walk_length.unwrap_or(d.walk_length),
        context_size: args.context_size.unwrap_or(d.context_size),
    };
    let e = base.embedding;
    let emb = EmbeddingConfig {
        dim: args.dim.unwrap_or(e.dim),
        negative_samples: args.negative_samples.unwrap_or(e.negative_samples),
        epochs: args.epochs.unwrap_or(e.epochs),
        learning_rate: args.learning_rate.unwrap_or(e.learning_rate),
        seed: args.seed.unwrap_or(e.seed),
    };
    let embeddings = embed_dataset::<graph2d::Real>(&ds, &walk, &emb)?;
    embeddings_to_container(&embeddings).save(&args.out)?;
    write_manifest(&manifest_path(&args.out), &EmbeddingManifest::new(&ds.name, walk, emb, ds.len()))?;
    log::info!("embedded {} graphs into {}", ds.len(), args.out.display());
    Ok(())
}

fn rasterize(args: &RasterizeArgs) -> Result<()> {
    let ds = args.dataset.load()?;
    let embeddings = embeddings_from_container::<graph2d::Real>(&TensorContainer::load(&args.embeddings)?)?;
    if embeddings.len() != ds.len() {
        bail!("{} embeddings for {} graphs", embeddings.len(), ds.len());
    }
    let scope = PcaScope::from(args.pca_scope);
    let (vectors, pca) = compress_embeddings(&embeddings, args.dims, scope, None)?;
    if let Some(model) = pca {
        let path = args.out.with_extension("pca.bin");
        model.to_container().save(&path)?;
        log::info!("PCA model written to {}", path.display());
    }
    let mut spec = compute_spec(&vectors, args.resolution, None)?;
    if let Some(size) = args.image_size {
        let range = spec.max - spec.min;
        if range > 0.0 {
            spec = ImageSpec::from_extent(spec.min, spec.max, size as f64 / range, spec.layout)?;
        }
    }
    let images = rasterize_dataset(&vectors, &ds.labels(), &spec)?;
    if let Some(dir) = &args.png_dir {
        for im in &images {
            write_channel_pngs(im, dir, &format!("graph{}", im.graph_id))?;
        }
    }
    images_to_container(&images).save(&args.out)?;
    let manifest = ImagesManifest {
        dataset: ds.name.clone(),
        class_count: ds.class_count,
        spec,
        pca_scope: scope,
        normalize_histograms: args.normalize_histograms,
    };
    write_manifest(&manifest_path(&args.out), &manifest)?;
    let (c, h, w) = spec.shape();
    println!("{} images of shape {c}x{h}x{w}", images.len());
    Ok(())
}

fn load_images(path: &Path) -> Result<(graph2d::Images, ImagesManifest)> {
    let manifest: ImagesManifest = read_manifest(&manifest_path(path))?;
    let images = images_from_container(&TensorContainer::load(path)?)?;
    if images.is_empty() {
        bail!("{} holds no images", path.display());
    }
    Ok((graph2d::Images::from_graph_images(&images, manifest.normalize_histograms), manifest))
}

fn train_cmd(args: &TrainArgs) -> Result<()> {
    let (set, manifest) = load_images(&args.images)?;
    let config = args.config();
    let mut model =
        graph2d::Cnn::new(config.arch(set.channels, set.height, set.width, manifest.class_count), config.seed)?;
    let history = train(&mut model, &set, &config)?;
    save_checkpoint(&model, &args.out)?;
    if let Some(path) = &args.history {
        fs::write(path, history.to_csv())?;
    }
    let best = &history.epochs[history.best_epoch - 1];
    println!(
        "best epoch {} of {}: val_loss {:.4} val_accuracy {:.4}",
        history.best_epoch,
        history.epochs.len(),
        best.val_loss,
        best.val_accuracy
    );
    Ok(())
}

fn predict_cmd(args: &PredictArgs) -> Result<()> {
    let (set, _) = load_images(&args.images)?;
    let mut model = load_checkpoint::<graph2d::Real>(&args.model)?;
    let p = predict(&mut model, &set, args.batch_size)?;
    let classes = model.arch().classes;
    let mut out = String::from("index,label,predicted");
    for k in 0..classes {
        out.push_str(&format!(",p{k}"));
    }
    out.push('\n');
    for (i, (label, probs)) in p.labels.iter().zip(&p.probabilities).enumerate() {
        out.push_str(&format!("{i},{},{label}", set.labels[i]));
        for v in probs {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    match &args.out {
        Some(path) => fs::write(path, out)?,
        None => print!("{out}"),
    }
    let correct = p.labels.iter().zip(&set.labels).filter(|(a, b)| a == b).count();
    eprintln!("accuracy {:.4}", correct as f64 / set.len() as f64);
    Ok(())
}

fn kernel(args: &KernelArgs) -> Result<()> {
    let ds = args.dataset.load()?;
    let k = match args.kind {
        KernelType::Wl => wl_kernel_matrix(&ds.graphs, &WlConfig { iterations: args.iterations })?,
        KernelType::Graphlet => {
            let config = GraphletConfig {
                samples_per_graph: args.samples,
                min_size: args.min_size,
                max_size: args.max_size,
                connected_only: args.connected_only,
                seed: args.seed,
            };
            graphlet_kernel_matrix(&ds.graphs, &config)?
        }
    };
    k.to_container().save(&args.out)?;
    println!("{}x{} kernel in {:.3} s", k.matrix.rows(), k.matrix.cols(), k.seconds);
    if let Some(path) = &args.timings {
        let mut text = if path.exists() { fs::read_to_string(path)? } else { "dataset,seconds\n".to_string() };
        text.push_str(&format!("{},{}\n", ds.name, k.seconds));
        fs::write(path, text)?;
    }
    Ok(())
}

fn svm_eval(args: &SvmEvalArgs) -> Result<()> {
    let ds = args.dataset.load()?;
    let k = KernelMatrix::from_container(&TensorContainer::load(&args.kernel_file)?)?;
    let cfg = KernelMethodConfig { c_grid: args.c_grid.clone().unwrap_or_else(c_grid), ..Default::default() };
    let result =
        run_precomputed_kernel(&ds.name, &k.matrix, &ds.labels(), ds.class_count, &cfg, &args.cv.config(false))?;
    println!("accuracy {:.4} +- {:.4} over {} folds", result.mean, result.std, result.folds.len());
    if let Some(path) = &args.out {
        fs::write(path, result.results_csv())?;
    }
    Ok(())
}

fn method_config(args: &EvaluateArgs) -> Result<MethodConfig> {
    let text = match &args.config {
        Some(path) => Some(fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?),
        None => None,
    };
    let parse_err = |p: &PathBuf| format!("parsing {}", p.display());
    Ok(match args.method {
        MethodArg::Cnn => MethodConfig::Cnn(match (&text, &args.preset) {
            (Some(t), _) => serde_json::from_str(t).with_context(|| parse_err(args.config.as_ref().unwrap()))?,
            (None, Some(name)) => preset(name)?,
            (None, None) => CnnMethodConfig::default(),
        }),
        MethodArg::Wl | MethodArg::Graphlet => {
            let cfg: KernelMethodConfig = match &text {
                Some(t) => serde_json::from_str(t).with_context(|| parse_err(args.config.as_ref().unwrap()))?,
                None => KernelMethodConfig::default(),
            };
            if matches!(args.method, MethodArg::Wl) {
                MethodConfig::Wl(cfg)
            } else {
                MethodConfig::Graphlet(cfg)
            }
        }
        MethodArg::Majority => MethodConfig::Majority,
    })
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let ds = args.dataset.load()?;
    let method = method_config(args)?;
    let baselines = args
        .baseline
        .iter()
        .map(|p| -> Result<EvalResult> {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(serde_json::from_str(&text)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let result = run_experiment(&ds, &method, &args.cv.config(args.global_preprocessing))?;
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("results.csv"), result.results_csv())?;
    fs::write(args.out.join("timings.csv"), result.timings_csv())?;
    let summary = result.summary(&baselines.iter().collect::<Vec<_>>());
    fs::write(args.out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    fs::write(args.out.join("result.json"), serde_json::to_string(&result)?)?;
    println!(
        "{} on {}: {:.4} +- {:.4} ({} runs)",
        result.method,
        result.dataset,
        result.mean,
        result.std,
        result.folds.len()
    );
    for c in &summary.comparisons {
        println!("  vs {} ({:.4}): p = {:.4}", c.baseline, c.baseline_mean, c.test.p_value);
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Stats { dirs } => stats(&dirs),
        Command::Embed(a) => embed(&a),
        Command::Rasterize(a) => rasterize(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Predict(a) => predict_cmd(&a),
        Command::Kernel(a) => kernel(&a),
        Command::SvmEval(a) => svm_eval(&a),
        Command::Evaluate(a) => evaluate(&a),
    }
}
