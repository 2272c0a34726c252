//! Simple undirected graphs, labeled datasets, and Table-1 style statistics.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("a graph needs at least one node")]
    Empty,
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    NodeOutOfRange(usize, usize, usize),
    #[error("attribute matrix has {rows} rows for {nodes} nodes")]
    AttributeRows { rows: usize, nodes: usize },
    #[error("label {label} outside 0..{class_count}")]
    LabelOutOfRange { label: usize, class_count: usize },
    #[error("a dataset needs at least two classes, got {0}")]
    TooFewClasses(usize),
}

/// Per-node continuous attributes, row-major `node_count x width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeAttributes {
    pub width: usize,
    pub values: Vec<f64>,
}

impl NodeAttributes {
    pub fn row(&self, node: usize) -> &[f64] {
        &self.values[node * self.width..(node + 1) * self.width]
    }

    pub fn rows(&self) -> usize {
        self.values.len().checked_div(self.width).unwrap_or(0)
    }
}

/// An unweighted, undirected simple graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    node_count: usize,
    /// Normalized `(u, v)` with `u < v`, sorted, no duplicates.
    edges: Vec<(usize, usize)>,
    /// Sorted neighbor lists.
    adjacency: Vec<Vec<usize>>,
    attributes: Option<NodeAttributes>,
    label: usize,
}

impl Graph {
    /// Builds a graph, silently dropping self-loops and duplicate edges.
    /// Use [`Graph::with_report`] to learn how many were dropped.
    pub fn new(
        node_count: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        label: usize,
    ) -> Result<Self, GraphError> {
        Self::with_report(node_count, edges, label).map(|(g, _)| g)
    }

    /// Like [`Graph::new`] but also returns the number of self-loops and
    /// duplicate undirected edges that were discarded.
    pub fn with_report(
        node_count: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        label: usize,
    ) -> Result<(Self, usize), GraphError> {
        if node_count == 0 {
            return Err(GraphError::Empty);
        }
        let mut norm = Vec::new();
        let mut dropped = 0;
        for (u, v) in edges {
            if u >= node_count || v >= node_count {
                return Err(GraphError::NodeOutOfRange(u, v, node_count));
            }
            if u == v {
                dropped += 1;
                continue;
            }
            norm.push((u.min(v), u.max(v)));
        }
        norm.sort_unstable();
        let before = norm.len();
        norm.dedup();
        dropped += before - norm.len();

        let mut adjacency = vec![Vec::new(); node_count];
        for &(u, v) in &norm {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok((Self { node_count, edges: norm, adjacency, attributes: None, label }, dropped))
    }

    pub fn with_attributes(mut self, attributes: NodeAttributes) -> Result<Self, GraphError> {
        if attributes.rows() != self.node_count || attributes.values.len() != self.node_count * attributes.width {
            return Err(GraphError::AttributeRows { rows: attributes.rows(), nodes: self.node_count });
        }
        self.attributes = Some(attributes);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        let (a, b) = if self.adjacency[u].len() <= self.adjacency[v].len() { (u, v) } else { (v, u) };
        self.adjacency[a].binary_search(&b).is_ok()
    }

    pub fn attributes(&self) -> Option<&NodeAttributes> {
        self.attributes.as_ref()
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn set_label(&mut self, label: usize) {
        self.label = label;
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    /// Edge density in percent: `2|E| / (|V|(|V|-1)) * 100`, 0 for one node.
    pub fn density_percent(&self) -> f64 {
        let n = self.node_count as f64;
        if self.node_count < 2 {
            0.0
        } else {
            200.0 * self.edges.len() as f64 / (n * (n - 1.0))
        }
    }

    /// Connected components as sorted node lists, largest first (ties by
    /// smallest member).
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.node_count];
        let mut comps = Vec::new();
        for s in 0..self.node_count {
            if seen[s] {
                continue;
            }
            let mut comp = vec![s];
            seen[s] = true;
            let mut i = 0;
            while i < comp.len() {
                let u = comp[i];
                i += 1;
                for &v in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        comps
    }

    fn eccentricity(&self, source: usize, dist: &mut [usize]) -> usize {
        dist.fill(usize::MAX);
        dist[source] = 0;
        let mut queue = VecDeque::from([source]);
        let mut far = 0;
        while let Some(u) = queue.pop_front() {
            far = far.max(dist[u]);
            for &v in &self.adjacency[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        far
    }

    /// Diameter of the largest connected component (exact, all-pairs BFS).
    pub fn diameter(&self) -> usize {
        let comps = self.components();
        let mut dist = vec![usize::MAX; self.node_count];
        comps[0].iter().map(|&s| self.eccentricity(s, &mut dist)).max().unwrap_or(0)
    }

    /// Relabel nodes: node `i` becomes `perm[i]`. Attributes follow their node.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.node_count, "permutation length");
        let edges = self.edges.iter().map(|&(u, v)| (perm[u], perm[v]));
        let mut g = Self::new(self.node_count, edges, self.label).expect("permutation keeps validity");
        if let Some(attr) = &self.attributes {
            let mut values = vec![0.0; attr.values.len()];
            for (old, &new) in perm.iter().enumerate() {
                values[new * attr.width..(new + 1) * attr.width].copy_from_slice(attr.row(old));
            }
            g.attributes = Some(NodeAttributes { width: attr.width, values });
        }
        g
    }
}

/// A labeled collection of graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub class_count: usize,
    /// Original label value for each contiguous class index.
    pub label_values: Vec<i64>,
}

impl GraphDataset {
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>, class_count: usize) -> Result<Self, GraphError> {
        if class_count < 2 {
            return Err(GraphError::TooFewClasses(class_count));
        }
        if let Some(g) = graphs.iter().find(|g| g.label >= class_count) {
            return Err(GraphError::LabelOutOfRange { label: g.label, class_count });
        }
        Ok(Self { name: name.into(), graphs, class_count, label_values: (0..class_count as i64).collect() })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(Graph::label).collect()
    }

    pub fn has_attributes(&self) -> bool {
        !self.graphs.is_empty() && self.graphs.iter().all(|g| g.attributes.is_some())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for g in &self.graphs {
            counts[g.label] += 1;
        }
        counts
    }

    /// Sub-dataset with the graphs at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            graphs: indices.iter().map(|&i| self.graphs[i].clone()).collect(),
            class_count: self.class_count,
            label_values: self.label_values.clone(),
        }
    }
}

/// Summary statistics in the layout of the usual benchmark table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub name: String,
    pub max_nodes: usize,
    pub min_nodes: usize,
    pub avg_nodes: f64,
    pub max_edges: usize,
    pub min_edges: usize,
    pub avg_edges: f64,
    pub graph_count: usize,
    /// Computed on the largest connected component of each graph.
    pub avg_diameter: f64,
    pub avg_density_percent: f64,
    pub class_count: usize,
    /// Largest class size over smallest class size (`1:x`).
    pub max_class_imbalance: f64,
}

impl DatasetStats {
    pub const CSV_HEADER: &'static str = "dataset,max_vertices,min_vertices,avg_vertices,max_edges,min_edges,avg_edges,graphs,avg_diameter_lcc,avg_density_pct,classes,max_class_imbalance";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.2},{},{},{:.2},{},{:.3},{:.2},{},1:{:.1}",
            self.name,
            self.max_nodes,
            self.min_nodes,
            self.avg_nodes,
            self.max_edges,
            self.min_edges,
            self.avg_edges,
            self.graph_count,
            self.avg_diameter,
            self.avg_density_percent,
            self.class_count,
            self.max_class_imbalance
        )
    }
}

/// Panics on an empty dataset.
pub fn dataset_stats(dataset: &GraphDataset) -> DatasetStats {
    use rayon::prelude::*;

    assert!(!dataset.is_empty(), "dataset_stats on an empty dataset");
    let per_graph: Vec<(usize, usize, usize, f64)> = dataset
        .graphs
        .par_iter()
        .map(|g| (g.node_count(), g.edge_count(), g.diameter(), g.density_percent()))
        .collect();
    let n = per_graph.len() as f64;
    let nodes = per_graph.iter().map(|p| p.0);
    let edges = per_graph.iter().map(|p| p.1);
    let counts: Vec<usize> = dataset.class_counts().into_iter().filter(|&c| c > 0).collect();
    let imbalance = match (counts.iter().max(), counts.iter().min()) {
        (Some(&hi), Some(&lo)) => hi as f64 / lo as f64,
        _ => 1.0,
    };
    DatasetStats {
        name: dataset.name.clone(),
        max_nodes: nodes.clone().max().unwrap_or(0),
        min_nodes: nodes.clone().min().unwrap_or(0),
        avg_nodes: nodes.sum::<usize>() as f64 / n,
        max_edges: edges.clone().max().unwrap_or(0),
        min_edges: edges.clone().min().unwrap_or(0),
        avg_edges: edges.sum::<usize>() as f64 / n,
        graph_count: per_graph.len(),
        avg_diameter: per_graph.iter().map(|p| p.2 as f64).sum::<f64>() / n,
        avg_density_percent: per_graph.iter().map(|p| p.3).sum::<f64>() / n,
        class_count: dataset.class_count,
        max_class_imbalance: imbalance,
    }
}

/// Degree of every node.
pub fn degrees(graph: &Graph) -> Vec<usize> {
    graph.degrees()
}

/// Class sizes keyed by original label value.
pub fn label_histogram(dataset: &GraphDataset) -> BTreeMap<i64, usize> {
    let mut out = BTreeMap::new();
    for g in &dataset.graphs {
        *out.entry(dataset.label_values[g.label]).or_default() += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn triangle() -> Graph {
        Graph::new(3, [(0, 1), (1, 2), (0, 2)], 0).unwrap()
    }

    #[test]
    fn degree_examples() {
        assert_eq!(degrees(&triangle()), vec![2, 2, 2]);
        let star = Graph::new(4, [(0, 1), (0, 2), (0, 3)], 0).unwrap();
        assert_eq!(degrees(&star), vec![3, 1, 1, 1]);
        let path = Graph::new(3, [(0, 1), (1, 2)], 0).unwrap();
        assert_eq!(degrees(&path), vec![1, 2, 1]);
    }

    #[test]
    fn self_loops_and_duplicates_dropped() {
        let (g, dropped) = Graph::with_report(3, [(0, 1), (1, 0), (2, 2), (1, 2)], 0).unwrap();
        assert_eq!(dropped, 2);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn out_of_range_edge_rejected() {
        assert_eq!(Graph::new(2, [(0, 2)], 0), Err(GraphError::NodeOutOfRange(0, 2, 2)));
        assert_eq!(Graph::new(0, [], 0), Err(GraphError::Empty));
    }

    #[test]
    fn diameter_and_density() {
        let t = triangle();
        assert_eq!(t.diameter(), 1);
        assert!((t.density_percent() - 100.0).abs() < 1e-12);
        let path = Graph::new(4, [(0, 1), (1, 2), (2, 3)], 0).unwrap();
        assert_eq!(path.diameter(), 3);
        let single = Graph::new(1, [], 0).unwrap();
        assert_eq!(single.diameter(), 0);
        assert_eq!(single.density_percent(), 0.0);
    }

    #[test]
    fn disconnected_diameter_uses_largest_component() {
        // path of 3 plus an isolated edge: largest component diameter is 2
        let g = Graph::new(5, [(0, 1), (1, 2), (3, 4)], 0).unwrap();
        assert_eq!(g.diameter(), 2);
    }

    #[test]
    fn singleton_stats_are_flat() {
        let ds = GraphDataset::new("one", vec![triangle()], 2).unwrap();
        let s = dataset_stats(&ds);
        assert_eq!((s.max_nodes, s.min_nodes), (3, 3));
        assert_eq!(s.avg_nodes, 3.0);
        assert_eq!((s.max_edges, s.min_edges), (3, 3));
        assert_eq!(s.avg_edges, 3.0);
        assert_eq!(s.avg_density_percent, 100.0);
        assert_eq!(s.avg_diameter, 1.0);
    }

    #[test]
    fn dataset_validates_labels() {
        let mut g = triangle();
        g.set_label(5);
        assert!(matches!(GraphDataset::new("x", vec![g], 2), Err(GraphError::LabelOutOfRange { .. })));
        assert!(matches!(GraphDataset::new("x", vec![], 1), Err(GraphError::TooFewClasses(1))));
    }

    #[test]
    fn permutation_preserves_degree_multiset() {
        let g = Graph::new(4, [(0, 1), (0, 2), (0, 3)], 1).unwrap();
        let p = g.permuted(&[3, 2, 1, 0]);
        assert_eq!(p.degrees(), vec![1, 1, 1, 3]);
        assert_eq!(p.label(), 1);
    }
}
