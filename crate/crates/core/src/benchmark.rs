//! Reader and writer for the multi-file text format used by the public
//! graph-classification benchmark collections:
//!
//! * `<DS>_A.txt`: one `i, j` edge per line, 1-based global node ids
//! * `<DS>_graph_indicator.txt`: line `i` holds the 1-based graph id of node `i`
//! * `<DS>_graph_labels.txt`: one integer class label per graph
//! * `<DS>_node_attributes.txt` (optional): comma-separated reals per node

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::warn;
use thiserror::Error;

use crate::graph::{Graph, GraphDataset, GraphError, NodeAttributes};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("no `<name>_A.txt` file in {0}")]
    NoDataset(PathBuf),
    #[error("missing mandatory file {0}")]
    MissingFile(PathBuf),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("edge ({0}, {1}) references a node outside its graph")]
    NodeOutsideGraph(usize, usize),
    #[error("graph {0} has no nodes")]
    EmptyGraph(usize),
    #[error("{lines} attribute lines for {nodes} nodes")]
    AttributeCount { lines: usize, nodes: usize },
    #[error("{labels} graph labels for {graphs} graphs")]
    LabelCount { labels: usize, graphs: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn read(path: &Path) -> Result<String, LoadError> {
    if !path.exists() {
        return Err(LoadError::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.to_path_buf(), source })
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty())
}

fn parse_err(file: &Path, line: usize, msg: impl Into<String>) -> LoadError {
    LoadError::Parse { file: file.display().to_string(), line, msg: msg.into() }
}

/// Finds the dataset name from the `<DS>_A.txt` file in `dir`.
pub fn dataset_name(dir: &Path) -> Result<String, LoadError> {
    let entries = fs::read_dir(dir).map_err(|source| LoadError::Io { path: dir.to_path_buf(), source })?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix("_A.txt")).map(str::to_owned))
        .collect();
    names.sort();
    names.into_iter().next().ok_or_else(|| LoadError::NoDataset(dir.to_path_buf()))
}

pub fn load_benchmark_dataset(dir: &Path) -> Result<GraphDataset, LoadError> {
    let name = dataset_name(dir)?;
    let file = |suffix: &str| dir.join(format!("{name}_{suffix}.txt"));

    let indicator_path = file("graph_indicator");
    let indicator_text = read(&indicator_path)?;
    let mut node_graph = Vec::new();
    for (ln, l) in lines(&indicator_text) {
        let g: usize = l.parse().map_err(|_| parse_err(&indicator_path, ln, "expected graph id"))?;
        if g == 0 {
            return Err(parse_err(&indicator_path, ln, "graph ids are 1-based"));
        }
        node_graph.push(g - 1);
    }
    let graph_count = node_graph.iter().max().map_or(0, |m| m + 1);

    // local index of each global node, in order of appearance per graph
    let mut sizes = vec![0usize; graph_count];
    let local: Vec<usize> = node_graph
        .iter()
        .map(|&g| {
            sizes[g] += 1;
            sizes[g] - 1
        })
        .collect();
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(LoadError::EmptyGraph(empty + 1));
    }

    let labels_path = file("graph_labels");
    let labels_text = read(&labels_path)?;
    let mut raw_labels = Vec::new();
    for (ln, l) in lines(&labels_text) {
        let v: i64 = l.parse().map_err(|_| parse_err(&labels_path, ln, "expected integer label"))?;
        raw_labels.push(v);
    }
    if raw_labels.len() != graph_count {
        return Err(LoadError::LabelCount { labels: raw_labels.len(), graphs: graph_count });
    }
    let label_values: Vec<i64> = raw_labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();

    let edges_path = file("A");
    let edges_text = read(&edges_path)?;
    let mut edges = vec![Vec::new(); graph_count];
    for (ln, l) in lines(&edges_text) {
        let mut parts = l.split(',').map(str::trim);
        let mut endpoint = || -> Result<usize, LoadError> {
            parts
                .next()
                .and_then(|p| p.parse::<usize>().ok())
                .filter(|&v| v >= 1)
                .ok_or_else(|| parse_err(&edges_path, ln, "expected `i, j` with 1-based ids"))
        };
        let (a, b) = (endpoint()?, endpoint()?);
        if a > node_graph.len() || b > node_graph.len() || node_graph[a - 1] != node_graph[b - 1] {
            return Err(LoadError::NodeOutsideGraph(a, b));
        }
        edges[node_graph[a - 1]].push((local[a - 1], local[b - 1]));
    }

    let attr_path = file("node_attributes");
    let attributes = if attr_path.exists() {
        let text = read(&attr_path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (ln, l) in lines(&text) {
            let row = l
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| parse_err(&attr_path, ln, "expected comma-separated reals"))?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(parse_err(&attr_path, ln, "ragged attribute row"));
                }
            }
            rows.push(row);
        }
        if rows.len() != node_graph.len() {
            return Err(LoadError::AttributeCount { lines: rows.len(), nodes: node_graph.len() });
        }
        Some(rows)
    } else {
        None
    };

    let mut members = vec![Vec::new(); graph_count];
    for (node, &g) in node_graph.iter().enumerate() {
        members[g].push(node);
    }
    let mut graphs = Vec::with_capacity(graph_count);
    let mut dropped_total = 0;
    for (g, edge_list) in edges.into_iter().enumerate() {
        let label = label_values.binary_search(&raw_labels[g]).expect("label collected above");
        let (mut graph, dropped) = Graph::with_report(sizes[g], edge_list, label)?;
        // each undirected edge is normally listed in both directions
        dropped_total += dropped.saturating_sub(graph.edge_count());
        if let Some(rows) = &attributes {
            let width = rows[0].len();
            let mut values = vec![0.0; sizes[g] * width];
            for &node in &members[g] {
                let l = local[node];
                values[l * width..(l + 1) * width].copy_from_slice(&rows[node]);
            }
            graph = graph.with_attributes(NodeAttributes { width, values })?;
        }
        graphs.push(graph);
    }
    if dropped_total > 0 {
        warn!("{name}: dropped {dropped_total} self-loops or duplicate edges");
    }

    let class_count = label_values.len().max(2);
    let mut ds = GraphDataset::new(name, graphs, class_count)?;
    ds.label_values = label_values;
    while ds.label_values.len() < class_count {
        let next = ds.label_values.last().map_or(0, |v| v + 1);
        ds.label_values.push(next);
    }
    Ok(ds)
}

/// Writes `dataset` in the benchmark format under `dir` (created if needed).
/// Edges are written in both directions, labels as their original values.
pub fn write_benchmark_dataset(dataset: &GraphDataset, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let name = &dataset.name;
    let create = |suffix: &str| -> io::Result<BufWriter<fs::File>> {
        Ok(BufWriter::new(fs::File::create(dir.join(format!("{name}_{suffix}.txt")))?))
    };
    let mut a = create("A")?;
    let mut ind = create("graph_indicator")?;
    let mut lab = create("graph_labels")?;
    let mut attr = if dataset.has_attributes() { Some(create("node_attributes")?) } else { None };

    let mut offset = 0;
    for (gi, g) in dataset.graphs.iter().enumerate() {
        for _ in 0..g.node_count() {
            writeln!(ind, "{}", gi + 1)?;
        }
        for &(u, v) in g.edges() {
            writeln!(a, "{}, {}", u + offset + 1, v + offset + 1)?;
            writeln!(a, "{}, {}", v + offset + 1, u + offset + 1)?;
        }
        writeln!(lab, "{}", dataset.label_values[g.label()])?;
        if let (Some(w), Some(at)) = (attr.as_mut(), g.attributes()) {
            for node in 0..g.node_count() {
                // `{:?}` prints the shortest representation that round-trips
                let row: Vec<String> = at.row(node).iter().map(|x| format!("{x:?}")).collect();
                writeln!(w, "{}", row.join(", "))?;
            }
        }
        offset += g.node_count();
    }
    a.flush()?;
    ind.flush()?;
    lab.flush()?;
    if let Some(mut w) = attr {
        w.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_files(dir: &Path, files: &[(&str, &str)]) {
        for (suffix, body) in files {
            fs::write(dir.join(format!("T_{suffix}.txt")), body).unwrap();
        }
    }

    #[test]
    fn triangle_loads() {
        let tmp = tempfile::tempdir().unwrap();
        write_files(
            tmp.path(),
            &[("A", "1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n"), ("graph_indicator", "1\n1\n1\n"), ("graph_labels", "1\n")],
        );
        let ds = load_benchmark_dataset(tmp.path()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.graphs[0].node_count(), 3);
        assert_eq!(ds.graphs[0].edge_count(), 3);
        assert_eq!(ds.name, "T");
    }

    #[test]
    fn node_beyond_indicator_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        write_files(
            tmp.path(),
            &[("A", "1, 2\n6, 7\n"), ("graph_indicator", "1\n1\n1\n1\n1\n1\n"), ("graph_labels", "0\n")],
        );
        assert!(matches!(load_benchmark_dataset(tmp.path()), Err(LoadError::NodeOutsideGraph(6, 7))));
    }

    #[test]
    fn cross_graph_edge_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        write_files(tmp.path(), &[("A", "1, 3\n"), ("graph_indicator", "1\n1\n2\n"), ("graph_labels", "0\n1\n")]);
        assert!(matches!(load_benchmark_dataset(tmp.path()), Err(LoadError::NodeOutsideGraph(1, 3))));
    }

    #[test]
    fn missing_labels_file() {
        let tmp = tempfile::tempdir().unwrap();
        write_files(tmp.path(), &[("A", "1, 2\n"), ("graph_indicator", "1\n1\n")]);
        assert!(matches!(load_benchmark_dataset(tmp.path()), Err(LoadError::MissingFile(_))));
    }

    #[test]
    fn attribute_count_mismatch() {
        let tmp = tempfile::tempdir().unwrap();
        write_files(
            tmp.path(),
            &[("A", "1, 2\n"), ("graph_indicator", "1\n1\n"), ("graph_labels", "0\n"), ("node_attributes", "0.5, 1\n")],
        );
        assert!(matches!(load_benchmark_dataset(tmp.path()), Err(LoadError::AttributeCount { lines: 1, nodes: 2 })));
    }

    #[test]
    fn labels_remapped_contiguously() {
        let tmp = tempfile::tempdir().unwrap();
        write_files(
            tmp.path(),
            &[("A", "1, 2\n3, 4\n"), ("graph_indicator", "1\n1\n2\n2\n"), ("graph_labels", "-1\n1\n")],
        );
        let ds = load_benchmark_dataset(tmp.path()).unwrap();
        assert_eq!(ds.labels(), vec![0, 1]);
        assert_eq!(ds.label_values, vec![-1, 1]);
    }
}
