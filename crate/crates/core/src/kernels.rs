//! Graphlet and Weisfeiler-Lehman subtree kernels.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;
use std::time::Instant;

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{Record, TensorContainer};
use crate::graph::Graph;
use crate::linalg::Matrix;
use crate::rng;

pub const MAX_GRAPHLET_SIZE: usize = 6;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("graphlet of {0} nodes exceeds the 6-node limit")]
    TooLarge(usize),
    #[error("invalid graphlet sizes {min}..={max} (need 3 <= min <= max <= 6)")]
    Sizes { min: usize, max: usize },
    #[error("WL iterations must be at least 1")]
    Iterations,
    #[error("empty dataset")]
    Empty,
}

/// Isomorphism class of a graph on at most six nodes:
/// `(node count << 16) | minimal upper-triangle adjacency bits`.
pub type GraphletCode = u32;

/// Bit position of the pair `{i, j}` in the upper-triangle order
/// (0,1), (0,2), ..., (1,2), ...
fn pair_bit(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                prefix.push(v);
                rec(prefix, used, out);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Canonical bits for every adjacency bit pattern on `n` nodes: each
/// orbit under node permutations maps to its smallest member.
fn build_table(n: usize) -> Vec<u16> {
    let pairs = n * n.saturating_sub(1) / 2;
    let perms = permutations(n);
    let pair_list: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let mut table = vec![u16::MAX; 1 << pairs];
    for bits in 0..table.len() {
        if table[bits] != u16::MAX {
            continue;
        }
        let orbit: Vec<usize> = perms
            .iter()
            .map(|p| {
                pair_list
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| bits >> b & 1 == 1)
                    .fold(0usize, |acc, (_, &(i, j))| acc | 1 << pair_bit(n, p[i], p[j]))
            })
            .collect();
        let canon = *orbit.iter().min().expect("at least the identity") as u16;
        for image in orbit {
            table[image] = canon;
        }
    }
    table
}

fn table(n: usize) -> &'static [u16] {
    static TABLES: [OnceLock<Vec<u16>>; MAX_GRAPHLET_SIZE + 1] = [
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
    ];
    TABLES[n].get_or_init(|| build_table(n))
}

/// Canonical code from raw adjacency bits in [`pair_bit`] order.
fn canonical_bits(n: usize, bits: usize) -> GraphletCode {
    ((n as u32) << 16) | u32::from(table(n)[bits])
}

/// Adjacency bits of the subgraph induced by `nodes`.
fn induced_bits(graph: &Graph, nodes: &[usize]) -> usize {
    let n = nodes.len();
    let mut bits = 0;
    for a in 0..n {
        for b in a + 1..n {
            if graph.has_edge(nodes[a], nodes[b]) {
                bits |= 1 << pair_bit(n, a, b);
            }
        }
    }
    bits
}

/// Equal codes exactly for isomorphic graphs.
pub fn canonical_form(graph: &Graph) -> Result<GraphletCode, KernelError> {
    let n = graph.node_count();
    if n > MAX_GRAPHLET_SIZE {
        return Err(KernelError::TooLarge(n));
    }
    let nodes: Vec<usize> = (0..n).collect();
    Ok(canonical_bits(n, induced_bits(graph, &nodes)))
}

/// Number of isomorphism classes of graphs on `n <= 6` nodes.
pub fn isomorphism_class_count(n: usize) -> usize {
    let mut t: Vec<u16> = table(n).to_vec();
    t.sort_unstable();
    t.dedup();
    t.len()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphletConfig {
    pub samples_per_graph: usize,
    pub min_size: usize,
    pub max_size: usize,
    /// Reject disconnected samples (up to a bounded number of retries).
    pub connected_only: bool,
    pub seed: u64,
}

impl Default for GraphletConfig {
    fn default() -> Self {
        Self { samples_per_graph: 2000, min_size: 3, max_size: 6, connected_only: false, seed: 1 }
    }
}

impl GraphletConfig {
    pub fn validate(&self) -> Result<(), KernelError> {
        if !(3 <= self.min_size && self.min_size <= self.max_size && self.max_size <= MAX_GRAPHLET_SIZE) {
            return Err(KernelError::Sizes { min: self.min_size, max: self.max_size });
        }
        Ok(())
    }
}

/// Sparse occurrence counts keyed by canonical code.
pub type GraphletCounts = BTreeMap<GraphletCode, u64>;

const CONNECTED_RETRIES: usize = 1000;

fn is_connected_bits(n: usize, bits: usize) -> bool {
    let mut seen = 1usize;
    let mut frontier = vec![0];
    while let Some(u) = frontier.pop() {
        for v in 0..n {
            if v != u && seen >> v & 1 == 0 && bits >> pair_bit(n, u, v) & 1 == 1 {
                seen |= 1 << v;
                frontier.push(v);
            }
        }
    }
    seen.count_ones() as usize == n
}

/// Counts of sampled induced graphlets. Each sample draws a size uniformly
/// from `min_size..=max_size` (capped at the node count) and then a
/// uniform node subset of that size. Graphs smaller than `min_size` give
/// an empty vector.
pub fn graphlet_count_vector(graph: &Graph, config: &GraphletConfig) -> Result<GraphletCounts, KernelError> {
    config.validate()?;
    let n = graph.node_count();
    let mut counts = GraphletCounts::new();
    if n < config.min_size {
        log::warn!("graph with {n} nodes is smaller than the minimum graphlet size {}", config.min_size);
        return Ok(counts);
    }
    let max = config.max_size.min(n);
    let mut r = rng::seeded(config.seed);
    let mut rejected = 0usize;
    for _ in 0..config.samples_per_graph {
        let mut attempts = 0;
        loop {
            let size = r.random_range(config.min_size..=max);
            let mut nodes = sample(&mut r, n, size).into_vec();
            nodes.sort_unstable();
            let bits = induced_bits(graph, &nodes);
            if !config.connected_only || is_connected_bits(size, bits) {
                *counts.entry(canonical_bits(size, bits)).or_insert(0) += 1;
                break;
            }
            attempts += 1;
            if attempts == CONNECTED_RETRIES {
                rejected += 1;
                break;
            }
        }
    }
    if rejected > 0 {
        log::warn!("{rejected} graphlet samples found no connected subset after {CONNECTED_RETRIES} tries");
    }
    Ok(counts)
}

/// Every induced subgraph with `min_size..=max_size` nodes, counted once.
pub fn graphlet_counts_exhaustive(
    graph: &Graph,
    min_size: usize,
    max_size: usize,
) -> Result<GraphletCounts, KernelError> {
    if max_size > MAX_GRAPHLET_SIZE {
        return Err(KernelError::TooLarge(max_size));
    }
    fn rec(graph: &Graph, start: usize, chosen: &mut Vec<usize>, min: usize, max: usize, out: &mut GraphletCounts) {
        if chosen.len() >= min {
            *out.entry(canonical_bits(chosen.len(), induced_bits(graph, chosen))).or_insert(0) += 1;
        }
        if chosen.len() == max {
            return;
        }
        for v in start..graph.node_count() {
            chosen.push(v);
            rec(graph, v + 1, chosen, min, max, out);
            chosen.pop();
        }
    }
    let mut out = GraphletCounts::new();
    rec(graph, 0, &mut Vec::new(), min_size.max(1), max_size, &mut out);
    Ok(out)
}

/// One count vector per graph; graph `i` samples with seed
/// `derive(config.seed, i)`.
pub fn graphlet_vectors(graphs: &[Graph], config: &GraphletConfig) -> Result<Vec<GraphletCounts>, KernelError> {
    config.validate()?;
    graphs
        .par_iter()
        .enumerate()
        .map(|(i, g)| graphlet_count_vector(g, &GraphletConfig { seed: rng::derive(config.seed, i as u64), ..*config }))
        .collect()
}

fn sparse_dot<K: Ord>(a: &BTreeMap<K, u64>, b: &BTreeMap<K, u64>) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small.iter().filter_map(|(k, &x)| large.get(k).map(|&y| x as f64 * y as f64)).sum()
}

/// Cosine similarity of two count vectors; 0 when either is empty.
pub fn graphlet_kernel(a: &GraphletCounts, b: &GraphletCounts) -> f64 {
    let na = sparse_dot(a, a);
    let nb = sparse_dot(b, b);
    if na == 0.0 || nb == 0.0 {
        log::warn!("cosine with an all-zero graphlet vector defined as 0");
        return 0.0;
    }
    // integer counts keep na * nb exact, so identical vectors give exactly 1
    (sparse_dot(a, b) / (na * nb).sqrt()).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WlConfig {
    pub iterations: usize,
}

/// Label compression shared by all graphs of a dataset for one iteration.
pub type WlDictionary = HashMap<(u32, Vec<u32>), u32>;

/// One refinement step: each node's new label is the compressed pair of
/// its own label and the sorted multiset of its neighbours' labels.
pub fn wl_relabel(labels: &[u32], graph: &Graph, dictionary: &mut WlDictionary) -> Vec<u32> {
    assert_eq!(labels.len(), graph.node_count(), "one label per node");
    (0..graph.node_count())
        .map(|v| {
            let mut neigh: Vec<u32> = graph.neighbors(v).iter().map(|&u| labels[u]).collect();
            neigh.sort_unstable();
            let next = dictionary.len() as u32;
            *dictionary.entry((labels[v], neigh)).or_insert(next)
        })
        .collect()
}

/// Label histogram of one graph at one iteration.
pub type LabelHistogram = BTreeMap<u32, u64>;

/// Histograms for iterations `0..=iterations` of every graph
/// (`[graph][iteration]`). Initial labels are node degrees.
pub fn wl_features(graphs: &[Graph], iterations: usize) -> Vec<Vec<LabelHistogram>> {
    let hist = |labels: &[u32]| {
        let mut h = LabelHistogram::new();
        for &l in labels {
            *h.entry(l).or_insert(0) += 1;
        }
        h
    };
    let mut labels: Vec<Vec<u32>> = graphs.iter().map(|g| g.degrees().iter().map(|&d| d as u32).collect()).collect();
    let mut out: Vec<Vec<LabelHistogram>> = labels.iter().map(|l| vec![hist(l)]).collect();
    for _ in 0..iterations {
        let mut dictionary = WlDictionary::new();
        for (g, l) in graphs.iter().zip(labels.iter_mut()) {
            *l = wl_relabel(l, g, &mut dictionary);
        }
        for (o, l) in out.iter_mut().zip(&labels) {
            o.push(hist(l));
        }
    }
    out
}

/// Sum over iterations `0..=h` of the label-histogram dot products.
pub fn wl_subtree_kernel(a: &Graph, b: &Graph, config: &WlConfig) -> Result<f64, KernelError> {
    if config.iterations == 0 {
        return Err(KernelError::Iterations);
    }
    let f = wl_features(&[a.clone(), b.clone()], config.iterations);
    Ok(f[0].iter().zip(&f[1]).map(|(x, y)| sparse_dot(x, y)).sum())
}

/// Symmetric Gram matrix plus fill statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMatrix {
    pub matrix: Matrix<f64>,
    /// Kernel function calls made while filling.
    pub evaluations: u64,
    pub seconds: f64,
}

impl KernelMatrix {
    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.rows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    /// Rows `rows`, columns `cols`.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Matrix<f64> {
        Matrix::from_fn(rows.len(), cols.len(), |a, b| self.matrix[(rows[a], cols[b])])
    }

    pub fn to_container(&self) -> TensorContainer {
        let mut c = TensorContainer::new();
        c.push(Record::from_matrix(0, "kernel", &self.matrix));
        c
    }

    pub fn from_container(c: &TensorContainer) -> Result<Self, crate::container::ContainerError> {
        Ok(Self { matrix: c.get("kernel")?.to_matrix()?, evaluations: 0, seconds: 0.0 })
    }
}

/// Evaluates `k(i, j)` for `i <= j` only and mirrors, so the result is
/// exactly symmetric after `n(n+1)/2` calls. Rows are filled in parallel.
pub fn kernel_matrix<F>(n: usize, k: F) -> Result<KernelMatrix, KernelError>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    if n == 0 {
        return Err(KernelError::Empty);
    }
    let start = Instant::now();
    let calls = AtomicU64::new(0);
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = (i..n).map(|j| k(i, j)).collect();
            calls.fetch_add(row.len() as u64, Ordering::Relaxed);
            row
        })
        .collect();
    let mut m = Matrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            m[(i, i + off)] = v;
            m[(i + off, i)] = v;
        }
    }
    Ok(KernelMatrix { matrix: m, evaluations: calls.into_inner(), seconds: start.elapsed().as_secs_f64() })
}

pub fn graphlet_kernel_matrix(graphs: &[Graph], config: &GraphletConfig) -> Result<KernelMatrix, KernelError> {
    let vectors = graphlet_vectors(graphs, config)?;
    kernel_matrix(graphs.len(), |i, j| graphlet_kernel(&vectors[i], &vectors[j]))
}

/// Per-iteration WL Gram matrices, so kernels for every `h` up to the
/// maximum come from prefix sums.
#[derive(Debug, Clone)]
pub struct WlGram {
    per_iteration: Vec<KernelMatrix>,
}

impl WlGram {
    pub fn compute(graphs: &[Graph], max_iterations: usize) -> Result<Self, KernelError> {
        if max_iterations == 0 {
            return Err(KernelError::Iterations);
        }
        let features = wl_features(graphs, max_iterations);
        let per_iteration = (0..=max_iterations)
            .map(|it| kernel_matrix(graphs.len(), |i, j| sparse_dot(&features[i][it], &features[j][it])))
            .collect::<Result<_, _>>()?;
        Ok(Self { per_iteration })
    }

    pub fn max_iterations(&self) -> usize {
        self.per_iteration.len() - 1
    }

    /// Kernel with iterations `0..=h`.
    pub fn kernel(&self, h: usize) -> KernelMatrix {
        assert!(h >= 1 && h <= self.max_iterations(), "h outside the computed range");
        let n = self.per_iteration[0].len();
        let mut m = Matrix::zeros(n, n);
        for k in &self.per_iteration[..=h] {
            for (a, b) in m.as_mut_slice().iter_mut().zip(k.matrix.as_slice()) {
                *a += b;
            }
        }
        KernelMatrix {
            matrix: m,
            evaluations: self.per_iteration[0].evaluations,
            seconds: self.per_iteration[..=h].iter().map(|k| k.seconds).sum(),
        }
    }
}

pub fn wl_kernel_matrix(graphs: &[Graph], config: &WlConfig) -> Result<KernelMatrix, KernelError> {
    Ok(WlGram::compute(graphs, config.iterations)?.kernel(config.iterations))
}
