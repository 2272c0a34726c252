//! Repeated stratified cross-validation of the image+CNN pipeline and the
//! kernel SVM baselines.

mod stats;
mod synthetic;

use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use stats::{mann_whitney_u, mean, population_std, EmptySample, MannWhitney, EXACT_LIMIT};
pub use synthetic::{generate_synthetic_dataset, parse_class_specs, ClassSpec, GraphModel, SyntheticError};

pub use crate::split::{stratified_holdout, stratified_kfold, SplitError};

use crate::cnn::{evaluate as evaluate_cnn, train_with_validation, CnnError, TrainConfig, TrainError};
use crate::compress::{compress_embeddings, embedding_range, prepare_attribute_channels, CompressError, PcaScope};
use crate::embed::{embed_dataset, EmbedError, EmbeddingConfig, WalkConfig};
use crate::graph::GraphDataset;
use crate::kernels::{graphlet_kernel_matrix, GraphletConfig, KernelError, KernelMatrix, WlGram};
use crate::linalg::Matrix;
use crate::raster::{compute_spec, rasterize_dataset, write_channel_pngs, ImageSpec, RasterError};
use crate::rng;
use crate::svm::{c_grid, train_multiclass, CsvmConfig, SvmError};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Compress(#[from] CompressError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Cnn(#[from] CnnError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("repeat {repeat}, fold {fold}: {source}")]
    Fold { repeat: usize, fold: usize, source: Box<HarnessError> },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
    /// Share of each outer training side held out for grid search and
    /// early stopping.
    pub inner_validation: f64,
    /// Fit PCA and the image extent on the whole dataset instead of the
    /// outer training side.
    pub global_preprocessing: bool,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { folds: 10, repeats: 3, inner_validation: 0.1, global_preprocessing: false, seed: 1 }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.folds < 2 || self.repeats == 0 {
            return Err(HarnessError::Config("need folds >= 2 and repeats >= 1".into()));
        }
        if !(self.inner_validation > 0.0 && self.inner_validation < 1.0) {
            return Err(HarnessError::Config("inner_validation must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnMethodConfig {
    pub walk: WalkConfig,
    pub embedding: EmbeddingConfig,
    /// Compressed dimensions `d`; images get `d/2` embedding channels
    /// (plus `d/2` attribute channels when the dataset has attributes).
    pub compressed_dim: usize,
    /// Pixels per coordinate unit.
    pub resolution: f64,
    /// Overrides `resolution` so that images are `image_size` pixels wide.
    pub image_size: Option<usize>,
    pub pca_scope: PcaScope,
    pub normalize_histograms: bool,
    pub use_attributes: bool,
    pub train: TrainConfig,
    /// Per-channel PNGs of the first fold's images.
    pub png_dir: Option<PathBuf>,
}

impl Default for CnnMethodConfig {
    fn default() -> Self {
        Self {
            walk: WalkConfig::default(),
            embedding: EmbeddingConfig::default(),
            compressed_dim: 10,
            resolution: 14.0,
            image_size: None,
            pca_scope: PcaScope::Global,
            normalize_histograms: false,
            use_attributes: true,
            train: TrainConfig::default(),
            png_dir: None,
        }
    }
}

/// Names accepted by [`CnnMethodConfig::preset`].
pub const PRESETS: [&str; 6] = ["reddit-b", "reddit-5k", "reddit-12k", "collab", "imdb-b", "proteins-full"];

impl CnnMethodConfig {
    /// Per-dataset resolution, channel count and node2vec settings tuned
    /// for the standard social and protein benchmarks.
    pub fn preset(name: &str) -> Option<Self> {
        // (resolution, embedding channels, p, q, context, d_n2v)
        let (resolution, channels, p, q, context, dim) = match name {
            "reddit-b" => (9.0, 5, 2.0, 0.5, None, None),
            "reddit-5k" => (9.0, 2, 4.0, 0.25, None, None),
            "reddit-12k" => (9.0, 5, 1.0, 1.0, None, None),
            "collab" => (9.0, 5, 0.5, 2.0, Some(2), Some(12)),
            "imdb-b" => (14.0, 5, 1.0, 1.0, None, None),
            "proteins-full" => (9.0, 2, 0.5, 2.0, None, Some(4)),
            _ => return None,
        };
        let base = Self::default();
        Some(Self {
            walk: WalkConfig { p, q, context_size: context.unwrap_or(base.walk.context_size), ..base.walk },
            embedding: EmbeddingConfig { dim: dim.unwrap_or(base.embedding.dim), ..base.embedding },
            compressed_dim: 2 * channels,
            resolution,
            ..base
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelMethodConfig {
    pub c_grid: Vec<f64>,
    /// WL iteration candidates (ignored by the graphlet kernel).
    pub wl_iterations: Vec<usize>,
    pub graphlet: GraphletConfig,
    pub svm: CsvmConfig,
}

impl Default for KernelMethodConfig {
    fn default() -> Self {
        Self {
            c_grid: c_grid(),
            wl_iterations: (2..=7).collect(),
            graphlet: GraphletConfig::default(),
            svm: CsvmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum MethodConfig {
    Cnn(CnnMethodConfig),
    Wl(KernelMethodConfig),
    Graphlet(KernelMethodConfig),
    /// Predicts the most frequent training class.
    Majority,
}

impl MethodConfig {
    pub fn name(&self) -> &'static str {
        match self {
            MethodConfig::Cnn(_) => "cnn",
            MethodConfig::Wl(_) => "wl",
            MethodConfig::Graphlet(_) => "graphlet",
            MethodConfig::Majority => "majority",
        }
    }
}

/// Indices that touched a fitted object, for leakage audits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageEvent {
    pub repeat: usize,
    pub fold: usize,
    /// `pca`, `extent`, `early-stopping` or `grid-search`.
    pub object: String,
    pub indices: Vec<usize>,
}

#[derive(Debug, Default)]
struct LeakageLog(Mutex<Vec<LeakageEvent>>);

impl LeakageLog {
    fn record(&self, repeat: usize, fold: usize, object: &str, indices: &[usize]) {
        self.0.lock().expect("log lock").push(LeakageEvent {
            repeat,
            fold,
            object: object.into(),
            indices: indices.to_vec(),
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub repeat: usize,
    pub fold: usize,
    pub accuracy: f64,
    pub test_indices: Vec<usize>,
    pub best_c: Option<f64>,
    pub best_h: Option<usize>,
    pub epochs: Option<usize>,
    pub image_shape: Option<(usize, usize, usize)>,
    pub timings: PhaseTimings,
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub embedding: f64,
    pub compression: f64,
    pub rasterization: f64,
    pub training: f64,
    pub epoch_mean: f64,
    pub kernel_fill: f64,
    pub svm: f64,
    pub total: f64,
}

impl PhaseTimings {
    fn add(&mut self, o: &PhaseTimings) {
        self.embedding += o.embedding;
        self.compression += o.compression;
        self.rasterization += o.rasterization;
        self.training += o.training;
        self.kernel_fill += o.kernel_fill;
        self.svm += o.svm;
        self.total += o.total;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub dataset: String,
    pub method: String,
    pub folds: Vec<FoldResult>,
    pub mean: f64,
    pub std: f64,
    /// How `std` was computed.
    pub std_convention: String,
    pub timings: PhaseTimings,
    /// Positions (in the input dataset) of graphs too small for the
    /// requested dimensions.
    pub dropped_graphs: Vec<usize>,
    /// node2vec dimensionality actually used (CNN only).
    pub embedding_dim: Option<usize>,
    pub leakage: Vec<LeakageEvent>,
}

impl EvalResult {
    pub fn accuracies(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.accuracy).collect()
    }

    pub const RESULTS_HEADER: &'static str = "method,repeat,fold,accuracy,test_size,best_c,best_h,epochs";

    /// One row per outer fold.
    pub fn results_csv(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        let mut out = format!("{}\n", Self::RESULTS_HEADER);
        for f in &self.folds {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                self.method,
                f.repeat,
                f.fold,
                f.accuracy,
                f.test_indices.len(),
                opt(f.best_c.map(|c| c.to_string())),
                opt(f.best_h.map(|h| h.to_string())),
                opt(f.epochs.map(|e| e.to_string())),
            ));
        }
        out
    }

    pub const TIMINGS_HEADER: &'static str =
        "dataset,method,embedding_s,compression_s,rasterization_s,training_s,epoch_mean_s,kernel_fill_s,svm_s,total_s";

    pub fn timings_csv(&self) -> String {
        let t = &self.timings;
        format!(
            "{}\n{},{},{},{},{},{},{},{},{},{}\n",
            Self::TIMINGS_HEADER,
            self.dataset,
            self.method,
            t.embedding,
            t.compression,
            t.rasterization,
            t.training,
            t.epoch_mean,
            t.kernel_fill,
            t.svm,
            t.total
        )
    }

    /// Summary with optional significance tests against baselines.
    pub fn summary(&self, baselines: &[&EvalResult]) -> Summary {
        Summary {
            dataset: self.dataset.clone(),
            method: self.method.clone(),
            mean: self.mean,
            std: self.std,
            std_convention: self.std_convention.clone(),
            runs: self.folds.len(),
            dropped_graphs: self.dropped_graphs.len(),
            comparisons: baselines
                .iter()
                .map(|b| Comparison {
                    baseline: b.method.clone(),
                    baseline_mean: b.mean,
                    test: mann_whitney_u(&self.accuracies(), &b.accuracies()).expect("both runs have folds"),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub baseline_mean: f64,
    pub test: MannWhitney,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub dataset: String,
    pub method: String,
    pub mean: f64,
    pub std: f64,
    pub std_convention: String,
    pub runs: usize,
    pub dropped_graphs: usize,
    pub comparisons: Vec<Comparison>,
}

/// Outcome of an inner grid search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridChoice {
    pub c: f64,
    pub h: usize,
    pub accuracy: f64,
    /// SVM fits performed.
    pub trainings: usize,
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

fn fit_and_score(
    kernel: &Matrix<f64>,
    labels: &[usize],
    classes: usize,
    train: &[usize],
    test: &[usize],
    svm: &CsvmConfig,
) -> Result<f64, HarnessError> {
    let k_train = Matrix::from_fn(train.len(), train.len(), |a, b| kernel[(train[a], train[b])]);
    let y: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let model = train_multiclass(&k_train, &y, classes, svm)?;
    let k_test = Matrix::from_fn(test.len(), train.len(), |a, b| kernel[(test[a], train[b])]);
    let truth: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    Ok(accuracy(&model.predict(&k_test)?, &truth))
}

/// Picks `(C, h)` by inner-validation accuracy on a stratified split of
/// `train` (positions into the kernels). `kernels` pairs each candidate
/// `h` with its full kernel matrix. Ties go to the smaller `h`, then the
/// smaller `C`.
#[allow(clippy::too_many_arguments)]
pub fn grid_search_kernel(
    kernels: &[(usize, &Matrix<f64>)],
    labels: &[usize],
    classes: usize,
    train: &[usize],
    c_values: &[f64],
    inner_validation: f64,
    svm: &CsvmConfig,
    seed: u64,
) -> Result<GridChoice, HarnessError> {
    if kernels.is_empty() || c_values.is_empty() {
        return Err(HarnessError::Config("empty grid".into()));
    }
    let train_labels: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let (inner_tr, inner_val) = stratified_holdout(&train_labels, inner_validation, seed)?;
    let inner_tr: Vec<usize> = inner_tr.iter().map(|&p| train[p]).collect();
    let inner_val: Vec<usize> = inner_val.iter().map(|&p| train[p]).collect();
    let mut hs: Vec<&(usize, &Matrix<f64>)> = kernels.iter().collect();
    hs.sort_by_key(|(h, _)| *h);
    let mut cs = c_values.to_vec();
    cs.sort_by(f64::total_cmp);
    let mut best: Option<GridChoice> = None;
    let mut trainings = 0;
    for (h, k) in hs {
        for &c in &cs {
            let acc = fit_and_score(k, labels, classes, &inner_tr, &inner_val, &CsvmConfig { c, ..*svm })?;
            trainings += 1;
            if best.is_none_or(|b| acc > b.accuracy) {
                best = Some(GridChoice { c, h: *h, accuracy: acc, trainings: 0 });
            }
        }
    }
    let mut best = best.expect("nonempty grid");
    best.trainings = trainings;
    Ok(best)
}

/// Positions of graphs with fewer than `min_nodes` nodes.
pub fn too_small(dataset: &GraphDataset, min_nodes: usize) -> Vec<usize> {
    (0..dataset.len()).filter(|&i| dataset.graphs[i].node_count() < min_nodes).collect()
}

/// node2vec dimensionality capped by the smallest graph (an embedding
/// cannot have more dimensions than nodes), but never below `d`.
pub fn effective_embedding_dim(dataset: &GraphDataset, requested: usize, d: usize) -> usize {
    let smallest = dataset.graphs.iter().map(|g| g.node_count()).min().unwrap_or(requested);
    requested.min(smallest).max(d)
}

struct Prepared {
    dataset: GraphDataset,
    embeddings: Vec<crate::Embeddings>,
    embedding_seconds: f64,
}

fn cnn_fold(
    prep: &Prepared,
    cfg: &CnnMethodConfig,
    cv: &CvConfig,
    (repeat, fold): (usize, usize),
    train: &[usize],
    test: &[usize],
    log: &LeakageLog,
) -> Result<FoldResult, HarnessError> {
    let start = Instant::now();
    let mut timings = PhaseTimings::default();
    let ds = &prep.dataset;
    let fit_on = (!cv.global_preprocessing).then_some(train);
    let fit_indices: Vec<usize> = fit_on.map_or_else(|| (0..ds.len()).collect(), <[usize]>::to_vec);

    let t = Instant::now();
    let d = cfg.compressed_dim;
    let (mut vectors, _) = compress_embeddings(&prep.embeddings, d, cfg.pca_scope, fit_on)?;
    if cfg.pca_scope == PcaScope::Global {
        log.record(repeat, fold, "pca", &fit_indices);
    }
    if cfg.use_attributes && ds.has_attributes() {
        let range = embedding_range(&vectors, fit_on);
        let attrs = prepare_attribute_channels(ds, d, range, fit_on)?;
        for (v, a) in vectors.iter_mut().zip(attrs) {
            v.attributes = Some(a);
        }
    }
    timings.compression = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let spec = image_spec(&vectors, cfg, fit_on)?;
    log.record(repeat, fold, "extent", &fit_indices);
    let images = rasterize_dataset(&vectors, &ds.labels(), &spec)?;
    if let (Some(dir), 0, 0) = (&cfg.png_dir, repeat, fold) {
        for im in &images {
            write_channel_pngs(im, dir, &format!("graph{}", im.graph_id))?;
        }
    }
    let set = crate::Images::from_graph_images(&images, cfg.normalize_histograms);
    timings.rasterization = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let train_labels: Vec<usize> = train.iter().map(|&i| ds.graphs[i].label()).collect();
    let fold_seed = rng::derive(cv.seed, (repeat * 1000 + fold) as u64);
    let (inner_tr, inner_val) = stratified_holdout(&train_labels, cv.inner_validation, fold_seed)?;
    let inner_tr: Vec<usize> = inner_tr.iter().map(|&p| train[p]).collect();
    let inner_val: Vec<usize> = inner_val.iter().map(|&p| train[p]).collect();
    log.record(repeat, fold, "early-stopping", &inner_val);
    let tc = TrainConfig { seed: fold_seed, ..cfg.train };
    let (c, h, w) = spec.shape();
    let mut model = crate::Cnn::new(tc.arch(c, h, w, ds.class_count), rng::derive(fold_seed, 1))?;
    let history = train_with_validation(&mut model, &set.subset(&inner_tr), &set.subset(&inner_val), &tc)?;
    timings.training = t.elapsed().as_secs_f64();
    timings.epoch_mean = history.mean_epoch_seconds();
    let (_, acc) = evaluate_cnn(&mut model, &set.subset(test), tc.batch_size)?;
    timings.total = start.elapsed().as_secs_f64();
    Ok(FoldResult {
        repeat,
        fold,
        accuracy: acc,
        test_indices: test.to_vec(),
        best_c: None,
        best_h: None,
        epochs: Some(history.epochs.len()),
        image_shape: Some((c, h, w)),
        timings,
    })
}

fn image_spec(
    vectors: &[crate::compress::CompressedNodeVectors<crate::Real>],
    cfg: &CnnMethodConfig,
    fit_on: Option<&[usize]>,
) -> Result<ImageSpec, HarnessError> {
    let spec = compute_spec(vectors, cfg.resolution, fit_on)?;
    match cfg.image_size {
        Some(size) => {
            let range = spec.max - spec.min;
            let resolution = if range > 0.0 { size as f64 / range } else { cfg.resolution };
            Ok(ImageSpec::from_extent(spec.min, spec.max, resolution, spec.layout)?)
        }
        None => Ok(spec),
    }
}

/// Runs `cv.repeats` rounds of stratified `cv.folds`-fold cross-validation.
/// Folds run in parallel; every fitted object (PCA, image extent, grid
/// search, early stopping) sees only the outer training side unless
/// `global_preprocessing` is set for PCA and extent.
pub fn run_experiment(
    dataset: &GraphDataset,
    method: &MethodConfig,
    cv: &CvConfig,
) -> Result<EvalResult, HarnessError> {
    cv.validate()?;
    let start = Instant::now();
    let log = LeakageLog::default();
    let mut dropped = Vec::new();
    let mut embedding_dim = None;
    let mut prepared = None;
    let mut kernels: Vec<(usize, KernelMatrix)> = Vec::new();
    let mut timings = PhaseTimings::default();

    let working = match method {
        MethodConfig::Cnn(cfg) => {
            let d = cfg.compressed_dim;
            if d == 0 || d % 2 == 1 {
                return Err(HarnessError::Config(format!("compressed_dim {d} must be even and positive")));
            }
            dropped = too_small(dataset, d);
            if !dropped.is_empty() {
                log::warn!("dropping {} graphs with fewer than {d} nodes", dropped.len());
            }
            let keep: Vec<usize> = (0..dataset.len()).filter(|i| !dropped.contains(i)).collect();
            let ds = dataset.subset(&keep);
            let dim = effective_embedding_dim(&ds, cfg.embedding.dim, d);
            if dim != cfg.embedding.dim {
                log::warn!("node2vec dimensionality lowered from {} to {dim}", cfg.embedding.dim);
            }
            embedding_dim = Some(dim);
            let t = Instant::now();
            let embeddings = embed_dataset::<crate::Real>(&ds, &cfg.walk, &EmbeddingConfig { dim, ..cfg.embedding })?;
            timings.embedding = t.elapsed().as_secs_f64();
            prepared = Some(Prepared { dataset: ds.clone(), embeddings, embedding_seconds: timings.embedding });
            ds
        }
        MethodConfig::Wl(cfg) => {
            let max_h =
                cfg.wl_iterations.iter().copied().max().ok_or_else(|| HarnessError::Config("empty WL grid".into()))?;
            let gram = WlGram::compute(&dataset.graphs, max_h)?;
            for &h in &cfg.wl_iterations {
                let k = gram.kernel(h);
                timings.kernel_fill += k.seconds;
                kernels.push((h, k));
            }
            dataset.clone()
        }
        MethodConfig::Graphlet(cfg) => {
            let k = graphlet_kernel_matrix(&dataset.graphs, &cfg.graphlet)?;
            timings.kernel_fill = k.seconds;
            kernels.push((0, k));
            dataset.clone()
        }
        MethodConfig::Majority => dataset.clone(),
    };

    let labels = working.labels();
    let mut jobs = Vec::new();
    for repeat in 0..cv.repeats {
        let folds = stratified_kfold(&labels, cv.folds, rng::derive(cv.seed, repeat as u64))?;
        jobs.extend(folds.into_iter().enumerate().map(|(fold, (tr, te))| (repeat, fold, tr, te)));
    }

    let results: Vec<FoldResult> = jobs
        .par_iter()
        .map(|(repeat, fold, train, test)| {
            let (repeat, fold) = (*repeat, *fold);
            let wrap = |e: HarnessError| HarnessError::Fold { repeat, fold, source: Box::new(e) };
            let fold_seed = rng::derive(cv.seed, (repeat * 1000 + fold) as u64);
            match method {
                MethodConfig::Cnn(cfg) => {
                    cnn_fold(prepared.as_ref().expect("prepared"), cfg, cv, (repeat, fold), train, test, &log)
                        .map_err(wrap)
                }
                MethodConfig::Wl(cfg) | MethodConfig::Graphlet(cfg) => {
                    let start = Instant::now();
                    let refs: Vec<(usize, &Matrix<f64>)> = kernels.iter().map(|(h, k)| (*h, &k.matrix)).collect();
                    let choice = grid_search_kernel(
                        &refs,
                        &labels,
                        working.class_count,
                        train,
                        &cfg.c_grid,
                        cv.inner_validation,
                        &cfg.svm,
                        fold_seed,
                    )
                    .map_err(wrap)?;
                    log.record(repeat, fold, "grid-search", train);
                    let k = refs.iter().find(|(h, _)| *h == choice.h).expect("chosen from grid").1;
                    let acc = fit_and_score(
                        k,
                        &labels,
                        working.class_count,
                        train,
                        test,
                        &CsvmConfig { c: choice.c, ..cfg.svm },
                    )
                    .map_err(wrap)?;
                    let svm = start.elapsed().as_secs_f64();
                    let is_wl = matches!(method, MethodConfig::Wl(_));
                    Ok(FoldResult {
                        repeat,
                        fold,
                        accuracy: acc,
                        test_indices: test.clone(),
                        best_c: Some(choice.c),
                        best_h: is_wl.then_some(choice.h),
                        epochs: None,
                        image_shape: None,
                        timings: PhaseTimings { svm, total: svm, ..Default::default() },
                    })
                }
                MethodConfig::Majority => {
                    let mut counts = vec![0usize; working.class_count];
                    for &i in train {
                        counts[labels[i]] += 1;
                    }
                    let top = (0..counts.len()).fold(0, |b, c| if counts[c] > counts[b] { c } else { b });
                    let truth: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
                    Ok(FoldResult {
                        repeat,
                        fold,
                        accuracy: accuracy(&vec![top; test.len()], &truth),
                        test_indices: test.clone(),
                        best_c: None,
                        best_h: None,
                        epochs: None,
                        image_shape: None,
                        timings: PhaseTimings::default(),
                    })
                }
            }
        })
        .collect::<Result<_, _>>()?;

    for f in &results {
        timings.add(&f.timings);
    }
    if let Some(p) = &prepared {
        timings.embedding = p.embedding_seconds;
        let epochs: Vec<f64> = results.iter().map(|f| f.timings.epoch_mean).collect();
        timings.epoch_mean = mean(&epochs);
    }
    timings.total = start.elapsed().as_secs_f64();
    let acc: Vec<f64> = results.iter().map(|f| f.accuracy).collect();
    let mut leakage = log.0.into_inner().expect("log lock");
    leakage.sort_by(|a, b| (a.repeat, a.fold, &a.object).cmp(&(b.repeat, b.fold, &b.object)));
    Ok(EvalResult {
        dataset: dataset.name.clone(),
        method: method.name().to_string(),
        mean: mean(&acc),
        std: population_std(&acc),
        std_convention: format!("population standard deviation over {} fold accuracies", acc.len()),
        folds: results,
        timings,
        dropped_graphs: dropped,
        embedding_dim,
        leakage,
    })
}

/// Cross-validated C-SVM accuracy for a kernel matrix computed elsewhere.
/// Only `C` is searched, on the same inner split as [`run_experiment`].
pub fn run_precomputed_kernel(
    name: &str,
    kernel: &Matrix<f64>,
    labels: &[usize],
    classes: usize,
    cfg: &KernelMethodConfig,
    cv: &CvConfig,
) -> Result<EvalResult, HarnessError> {
    cv.validate()?;
    if kernel.rows() != labels.len() || kernel.cols() != labels.len() {
        return Err(HarnessError::Config(format!(
            "kernel is {}x{} for {} labels",
            kernel.rows(),
            kernel.cols(),
            labels.len()
        )));
    }
    let start = Instant::now();
    let log = LeakageLog::default();
    let mut jobs = Vec::new();
    for repeat in 0..cv.repeats {
        let folds = stratified_kfold(labels, cv.folds, rng::derive(cv.seed, repeat as u64))?;
        jobs.extend(folds.into_iter().enumerate().map(|(fold, (tr, te))| (repeat, fold, tr, te)));
    }
    let results: Vec<FoldResult> = jobs
        .par_iter()
        .map(|(repeat, fold, train, test)| {
            let (repeat, fold) = (*repeat, *fold);
            let wrap = |e: HarnessError| HarnessError::Fold { repeat, fold, source: Box::new(e) };
            let t = Instant::now();
            let fold_seed = rng::derive(cv.seed, (repeat * 1000 + fold) as u64);
            let choice = grid_search_kernel(
                &[(0, kernel)],
                labels,
                classes,
                train,
                &cfg.c_grid,
                cv.inner_validation,
                &cfg.svm,
                fold_seed,
            )
            .map_err(wrap)?;
            log.record(repeat, fold, "grid-search", train);
            let acc = fit_and_score(kernel, labels, classes, train, test, &CsvmConfig { c: choice.c, ..cfg.svm })
                .map_err(wrap)?;
            let svm = t.elapsed().as_secs_f64();
            Ok(FoldResult {
                repeat,
                fold,
                accuracy: acc,
                test_indices: test.clone(),
                best_c: Some(choice.c),
                best_h: None,
                epochs: None,
                image_shape: None,
                timings: PhaseTimings { svm, total: svm, ..Default::default() },
            })
        })
        .collect::<Result<_, HarnessError>>()?;
    let mut timings = PhaseTimings::default();
    for f in &results {
        timings.add(&f.timings);
    }
    timings.total = start.elapsed().as_secs_f64();
    let acc: Vec<f64> = results.iter().map(|f| f.accuracy).collect();
    let mut leakage = log.0.into_inner().expect("log lock");
    leakage.sort_by(|a, b| (a.repeat, a.fold, &a.object).cmp(&(b.repeat, b.fold, &b.object)));
    Ok(EvalResult {
        dataset: name.to_string(),
        method: "precomputed".into(),
        mean: mean(&acc),
        std: population_std(&acc),
        std_convention: format!("population standard deviation over {} fold accuracies", acc.len()),
        folds: results,
        timings,
        dropped_graphs: Vec::new(),
        embedding_dim: None,
        leakage,
    })
}

/// Indices in `result` refer to the dataset after dropping too-small graphs;
/// this maps them back to input positions.
pub fn original_positions(result: &EvalResult, input_len: usize) -> Vec<usize> {
    (0..input_len).filter(|i| !result.dropped_graphs.contains(i)).collect()
}
