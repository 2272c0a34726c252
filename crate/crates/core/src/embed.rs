//! node2vec-style node embeddings: second-order biased random walks sampled
//! with alias tables, then skip-gram with negative sampling.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::{ContainerError, Record, TensorContainer};
use crate::graph::{Graph, GraphDataset};
use crate::linalg::Matrix;
use crate::rng::{self, Rng};
use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("embedding dimension {dim} exceeds node count {nodes}; shrink the dimension")]
    DimensionTooLarge { dim: usize, nodes: usize },
    #[error("embedding dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("no training pairs")]
    NoPairs,
    #[error("invalid walk configuration: {0}")]
    InvalidWalk(&'static str),
}

/// Walker/Vose alias table for O(1) sampling from a discrete distribution.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    /// Weights must be nonnegative with a positive sum. Scaling every weight
    /// by the same constant yields an identical table.
    pub fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        assert!(n > 0, "alias table over an empty support");
        let total: f64 = weights.iter().sum();
        assert!(total > 0.0 && total.is_finite(), "alias weights must have a positive finite sum");
        let mut prob: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
        let mut alias = vec![0; n];
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| prob[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            alias[s] = l;
            prob[l] -= 1.0 - prob[s];
            if prob[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding
        for i in small.into_iter().chain(large) {
            prob[i] = 1.0;
        }
        Self { prob, alias }
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.prob.len());
        if rng.random::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    /// Return parameter.
    pub p: f64,
    /// In-out parameter.
    pub q: f64,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub context_size: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self { p: 1.0, q: 1.0, walks_per_node: 10, walk_length: 80, context_size: 10 }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if !(self.p > 0.0 && self.q > 0.0) {
            return Err(EmbedError::InvalidWalk("p and q must be positive"));
        }
        if self.walks_per_node == 0 || self.walk_length == 0 {
            return Err(EmbedError::InvalidWalk("walk count and length must be positive"));
        }
        if self.context_size == 0 || self.context_size + 1 > self.walk_length {
            return Err(EmbedError::InvalidWalk("context size must be in 1..walk_length"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub negative_samples: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self { dim: 128, negative_samples: 5, epochs: 1, learning_rate: 0.025, seed: 1 }
    }
}

/// Node embedding matrix (`|V| x dim`) of one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEmbeddings<T> {
    pub graph_id: usize,
    pub matrix: Matrix<T>,
}

/// Transition weights from `current` to each of its neighbors (in
/// `graph.neighbors(current)` order), having arrived from `prev`:
/// `1/p` back to `prev`, `1` to neighbors of `prev`, `1/q` elsewhere.
/// Empty when `current` is isolated.
pub fn transition_weights(graph: &Graph, prev: usize, current: usize, p: f64, q: f64) -> Vec<f64> {
    debug_assert!(graph.has_edge(prev, current), "prev and current must be adjacent");
    graph
        .neighbors(current)
        .iter()
        .map(|&x| {
            if x == prev {
                1.0 / p
            } else if graph.has_edge(x, prev) {
                1.0
            } else {
                1.0 / q
            }
        })
        .collect()
}

/// Above this many directed-edge table entries the walker computes second
/// order weights per step instead of precomputing alias tables.
const MAX_TABLE_ENTRIES: usize = 20_000_000;

struct Walker<'g> {
    graph: &'g Graph,
    p: f64,
    q: f64,
    /// `tables[cur][k]` is the table used when arriving at `cur` from its
    /// `k`-th neighbor; `None` for first-order walks or oversized graphs.
    tables: Option<Vec<Vec<AliasTable>>>,
}

impl<'g> Walker<'g> {
    fn new(graph: &'g Graph, p: f64, q: f64) -> Self {
        let first_order = p == 1.0 && q == 1.0;
        let entries: usize = (0..graph.node_count()).map(|v| graph.neighbors(v).len().pow(2)).sum();
        let tables = (!first_order && entries <= MAX_TABLE_ENTRIES).then(|| {
            (0..graph.node_count())
                .map(|cur| {
                    graph
                        .neighbors(cur)
                        .iter()
                        .map(|&prev| AliasTable::new(&transition_weights(graph, prev, cur, p, q)))
                        .collect()
                })
                .collect()
        });
        Self { graph, p, q, tables }
    }

    fn next(&self, prev: usize, cur: usize, rng: &mut Rng) -> usize {
        let nbrs = self.graph.neighbors(cur);
        if self.p == 1.0 && self.q == 1.0 {
            return nbrs[rng.random_range(0..nbrs.len())];
        }
        if let Some(tables) = &self.tables {
            let k = nbrs.binary_search(&prev).expect("walk steps follow edges");
            return nbrs[tables[cur][k].sample(rng)];
        }
        let w = transition_weights(self.graph, prev, cur, self.p, self.q);
        let total: f64 = w.iter().sum();
        let mut r = rng.random::<f64>() * total;
        for (i, wi) in w.iter().enumerate() {
            r -= wi;
            if r < 0.0 {
                return nbrs[i];
            }
        }
        nbrs[nbrs.len() - 1]
    }

    fn walk(&self, start: usize, length: usize, rng: &mut Rng) -> Vec<usize> {
        let mut walk = Vec::with_capacity(length);
        walk.push(start);
        while walk.len() < length {
            let cur = walk[walk.len() - 1];
            let nbrs = self.graph.neighbors(cur);
            if nbrs.is_empty() {
                break;
            }
            let next = if walk.len() == 1 {
                nbrs[rng.random_range(0..nbrs.len())]
            } else {
                self.next(walk[walk.len() - 2], cur, rng)
            };
            walk.push(next);
        }
        walk
    }
}

/// `walks_per_node` truncated biased walks from every node; node order is
/// reshuffled for every round. Deterministic for a given seed.
pub fn generate_walks(graph: &Graph, cfg: &WalkConfig, seed: u64) -> Vec<Vec<usize>> {
    let walker = Walker::new(graph, cfg.p, cfg.q);
    let mut rng = rng::seeded(seed);
    let mut order: Vec<usize> = (0..graph.node_count()).collect();
    let mut walks = Vec::with_capacity(cfg.walks_per_node * order.len());
    for _ in 0..cfg.walks_per_node {
        order.shuffle(&mut rng);
        for &start in &order {
            walks.push(walker.walk(start, cfg.walk_length, &mut rng));
        }
    }
    walks
}

/// Every `(target, context)` pair with `0 < |i - j| <= c` inside each walk.
pub fn context_pairs(walks: &[Vec<usize>], c: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for walk in walks {
        for (i, &t) in walk.iter().enumerate() {
            let lo = i.saturating_sub(c);
            let hi = (i + c).min(walk.len() - 1);
            for (j, &ctx) in walk.iter().enumerate().take(hi + 1).skip(lo) {
                if j != i {
                    pairs.push((t, ctx));
                }
            }
        }
    }
    pairs
}

/// Input and output vectors after skip-gram training.
#[derive(Debug, Clone)]
pub struct SkipGramOutput<T> {
    /// Input-side ("target") vectors: the embeddings.
    pub input: Matrix<T>,
    /// Output-side ("context") vectors.
    pub output: Matrix<T>,
    /// Mean negative-sampling loss per pair, one entry per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Seeded initialization used by [`skipgram_train`]: input vectors uniform in
/// `±0.5/dim`, output vectors zero.
pub fn initial_embeddings<T: Scalar>(node_count: usize, cfg: &EmbeddingConfig) -> Matrix<T> {
    let mut rng = rng::seeded(rng::derive(cfg.seed, 0));
    let half = 0.5 / cfg.dim as f64;
    Matrix::from_fn(node_count, cfg.dim, |_, _| T::of(rng.random_range(-half..half)))
}

fn check_dims(node_count: usize, dim: usize) -> Result<(), EmbedError> {
    if dim < 2 {
        return Err(EmbedError::DimensionTooSmall(dim));
    }
    if dim > node_count {
        return Err(EmbedError::DimensionTooLarge { dim, nodes: node_count });
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// log(1 + e^-x) without overflow.
fn softplus_neg(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

struct SkipGram<T> {
    input: Matrix<T>,
    output: Matrix<T>,
    noise: AliasTable,
    negatives: usize,
    grad: Vec<T>,
}

impl<T: Scalar> SkipGram<T> {
    fn new(node_count: usize, cfg: &EmbeddingConfig, noise_counts: &[f64]) -> Self {
        let weights: Vec<f64> = noise_counts.iter().map(|c| c.powf(0.75)).collect();
        Self {
            input: initial_embeddings(node_count, cfg),
            output: Matrix::zeros(node_count, cfg.dim),
            noise: AliasTable::new(&weights),
            negatives: cfg.negative_samples,
            grad: vec![T::zero(); cfg.dim],
        }
    }

    /// One SGD step on `-log σ(u_t·v_c) - Σ log σ(-u_t·v_n)`; returns the loss.
    fn step(&mut self, target: usize, context: usize, lr: f64, rng: &mut Rng) -> f64 {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
        let mut loss = 0.0;
        for s in 0..=self.negatives {
            let (sample, label) = if s == 0 {
                (context, 1.0)
            } else {
                let n = self.noise.sample(rng);
                if n == context {
                    continue;
                }
                (n, 0.0)
            };
            let u = self.input.row(target);
            let v = self.output.row_mut(sample);
            let f: f64 = u.iter().zip(v.iter()).map(|(a, b)| *a * *b).sum::<T>().as_f64();
            loss += if label == 1.0 { softplus_neg(f) } else { softplus_neg(-f) };
            let g = T::of((label - sigmoid(f)) * lr);
            for ((acc, vk), &uk) in self.grad.iter_mut().zip(v.iter_mut()).zip(u) {
                *acc += g * *vk;
                *vk += g * uk;
            }
        }
        for (uk, gk) in self.input.row_mut(target).iter_mut().zip(&self.grad) {
            *uk += *gk;
        }
        loss
    }
}

fn learning_rate(lr0: f64, done: usize, total: usize) -> f64 {
    let progress = done as f64 / total.max(1) as f64;
    lr0 * (1.0 - progress * (1.0 - 1e-4))
}

/// Skip-gram with negative sampling over explicit pairs. The noise
/// distribution is the target frequency raised to 3/4. Pairs are shuffled
/// every epoch; the learning rate decays linearly to 1e-4 of its start.
pub fn skipgram_train<T: Scalar>(
    pairs: &[(usize, usize)],
    node_count: usize,
    cfg: &EmbeddingConfig,
) -> Result<SkipGramOutput<T>, EmbedError> {
    check_dims(node_count, cfg.dim)?;
    if pairs.is_empty() {
        return Err(EmbedError::NoPairs);
    }
    let mut counts = vec![0.0; node_count];
    for &(t, _) in pairs {
        counts[t] += 1.0;
    }
    let mut model = SkipGram::<T>::new(node_count, cfg, &counts);
    let mut rng = rng::seeded(rng::derive(cfg.seed, 1));
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let total = cfg.epochs * pairs.len();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (k, &i) in order.iter().enumerate() {
            let lr = learning_rate(cfg.learning_rate, epoch * pairs.len() + k, total);
            let (t, c) = pairs[i];
            sum += model.step(t, c, lr, &mut rng);
        }
        losses.push(sum / pairs.len() as f64);
    }
    Ok(SkipGramOutput { input: model.input, output: model.output, epoch_losses: losses })
}

/// Skip-gram directly over walks (no materialized pair list). The noise
/// distribution is node visit frequency raised to 3/4; walk order is
/// shuffled every epoch.
pub fn skipgram_train_walks<T: Scalar>(
    walks: &[Vec<usize>],
    node_count: usize,
    context_size: usize,
    cfg: &EmbeddingConfig,
) -> Result<SkipGramOutput<T>, EmbedError> {
    check_dims(node_count, cfg.dim)?;
    let pair_count: usize = walks
        .iter()
        .map(|w| {
            (0..w.len()).map(|i| (i + context_size).min(w.len() - 1) - i.saturating_sub(context_size)).sum::<usize>()
        })
        .sum();
    if pair_count == 0 {
        return Err(EmbedError::NoPairs);
    }
    let mut counts = vec![0.0; node_count];
    for &v in walks.iter().flatten() {
        counts[v] += 1.0;
    }
    let mut model = SkipGram::<T>::new(node_count, cfg, &counts);
    let mut rng = rng::seeded(rng::derive(cfg.seed, 1));
    let mut order: Vec<usize> = (0..walks.len()).collect();
    let total = cfg.epochs * pair_count;
    let mut done = 0;
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for &w in &order {
            let walk = &walks[w];
            for (i, &t) in walk.iter().enumerate() {
                let lo = i.saturating_sub(context_size);
                let hi = (i + context_size).min(walk.len() - 1);
                for (j, &c) in walk.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    let lr = learning_rate(cfg.learning_rate, done, total);
                    sum += model.step(t, c, lr, &mut rng);
                    done += 1;
                }
            }
        }
        losses.push(sum / pair_count as f64);
    }
    Ok(SkipGramOutput { input: model.input, output: model.output, epoch_losses: losses })
}

/// Walks plus skip-gram for one graph. The seed is derived from the
/// embedding seed and `graph_id`, so graphs can be embedded in any order.
pub fn embed_graph<T: Scalar>(
    graph: &Graph,
    graph_id: usize,
    walk: &WalkConfig,
    emb: &EmbeddingConfig,
) -> Result<NodeEmbeddings<T>, EmbedError> {
    walk.validate()?;
    check_dims(graph.node_count(), emb.dim)?;
    let seed = rng::derive(emb.seed, graph_id as u64);
    let walks = generate_walks(graph, walk, seed);
    let cfg = EmbeddingConfig { seed, ..*emb };
    let out = skipgram_train_walks::<T>(&walks, graph.node_count(), walk.context_size, &cfg);
    let matrix = match out {
        Ok(o) => o.input,
        // edgeless graph: nothing to learn, keep the seeded initialization
        Err(EmbedError::NoPairs) => initial_embeddings(graph.node_count(), &cfg),
        Err(e) => return Err(e),
    };
    Ok(NodeEmbeddings { graph_id, matrix })
}

/// Embeds every graph independently, in parallel; output follows dataset order.
pub fn embed_dataset<T: Scalar>(
    dataset: &GraphDataset,
    walk: &WalkConfig,
    emb: &EmbeddingConfig,
) -> Result<Vec<NodeEmbeddings<T>>, EmbedError> {
    dataset.graphs.par_iter().enumerate().map(|(i, g)| embed_graph(g, i, walk, emb)).collect()
}

/// Settings stored next to a saved embedding container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingManifest {
    pub dataset: String,
    pub walk: WalkConfig,
    pub embedding: EmbeddingConfig,
    pub graph_count: usize,
    pub negative_distribution: String,
    pub learning_rate_schedule: String,
}

impl EmbeddingManifest {
    pub fn new(dataset: &str, walk: WalkConfig, embedding: EmbeddingConfig, graph_count: usize) -> Self {
        Self {
            dataset: dataset.to_owned(),
            walk,
            embedding,
            graph_count,
            negative_distribution: "node visit counts ^ 0.75".into(),
            learning_rate_schedule: "linear decay to 1e-4 x initial".into(),
        }
    }
}

pub fn embeddings_to_container<T: Scalar>(embeddings: &[NodeEmbeddings<T>]) -> TensorContainer {
    let mut c = TensorContainer::new();
    for e in embeddings {
        c.push(Record::from_matrix(e.graph_id as u64, format!("graph/{}", e.graph_id), &e.matrix));
    }
    c
}

pub fn embeddings_from_container<T: Scalar>(c: &TensorContainer) -> Result<Vec<NodeEmbeddings<T>>, ContainerError> {
    c.records
        .iter()
        .filter(|r| r.name.starts_with("graph/"))
        .map(|r| Ok(NodeEmbeddings { graph_id: r.id as usize, matrix: r.to_matrix()? }))
        .collect()
}
