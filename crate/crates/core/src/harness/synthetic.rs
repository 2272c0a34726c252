//! Random-graph fixtures with one generator per class.

use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, GraphDataset};
use crate::rng::{self, Rng};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SyntheticError {
    #[error("at least two class specs are required")]
    TooFewClasses,
    #[error("invalid class spec: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GraphModel {
    /// Every pair joined independently with probability `p`.
    ErdosRenyi { nodes: usize, p: f64 },
    /// Preferential attachment: starts from a star on `m + 1` nodes and
    /// joins each new node to `m` distinct nodes picked proportionally to
    /// degree, for `m (n - m)` edges in total.
    BarabasiAlbert { nodes: usize, m: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub model: GraphModel,
    pub count: usize,
}

impl GraphModel {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        match *self {
            GraphModel::ErdosRenyi { nodes, p } if nodes >= 1 && (0.0..=1.0).contains(&p) => Ok(()),
            GraphModel::BarabasiAlbert { nodes, m } if m >= 1 && nodes > m => Ok(()),
            other => Err(SyntheticError::Invalid(format!("{other:?}"))),
        }
    }

    pub fn sample(&self, label: usize, r: &mut Rng) -> Graph {
        match *self {
            GraphModel::ErdosRenyi { nodes, p } => erdos_renyi(nodes, p, label, r),
            GraphModel::BarabasiAlbert { nodes, m } => barabasi_albert(nodes, m, label, r),
        }
    }
}

fn erdos_renyi(n: usize, p: f64, label: usize, r: &mut Rng) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if p >= 1.0 || r.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, edges, label).expect("generated edges are in range")
}

fn barabasi_albert(n: usize, m: usize, label: usize, r: &mut Rng) -> Graph {
    let mut edges: Vec<(usize, usize)> = (1..=m).map(|v| (0, v)).collect();
    // each node appears once per incident edge
    let mut ends: Vec<usize> = edges.iter().flat_map(|&(u, v)| [u, v]).collect();
    for new in m + 1..n {
        let mut targets: Vec<usize> = Vec::with_capacity(m);
        while targets.len() < m {
            let t = ends[r.random_range(0..ends.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for t in targets {
            edges.push((t, new));
            ends.extend([t, new]);
        }
    }
    Graph::new(n, edges, label).expect("generated edges are in range")
}

/// `specs[k].count` graphs of class `k` each, in class order.
pub fn generate_synthetic_dataset(specs: &[ClassSpec], seed: u64) -> Result<GraphDataset, SyntheticError> {
    if specs.len() < 2 {
        return Err(SyntheticError::TooFewClasses);
    }
    for s in specs {
        s.model.validate()?;
    }
    let mut r = rng::seeded(seed);
    let graphs = specs
        .iter()
        .enumerate()
        .flat_map(|(label, s)| (0..s.count).map(move |_| (label, s.model)))
        .map(|(label, model)| model.sample(label, &mut r))
        .collect();
    GraphDataset::new("synthetic", graphs, specs.len()).map_err(|e| SyntheticError::Invalid(e.to_string()))
}

/// Parses `er:<nodes>:<p>:<count>` and `ba:<nodes>:<m>:<count>` items
/// separated by commas, e.g. `er:60:0.1:100,ba:60:3:100`.
pub fn parse_class_specs(text: &str) -> Result<Vec<ClassSpec>, SyntheticError> {
    text.split(',').map(str::trim).map(ClassSpec::from_str).collect()
}

impl FromStr for ClassSpec {
    type Err = SyntheticError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SyntheticError::Invalid(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        let [kind, nodes, param, count] = parts[..] else {
            return Err(bad());
        };
        let nodes: usize = nodes.parse().map_err(|_| bad())?;
        let count: usize = count.parse().map_err(|_| bad())?;
        let model = match kind {
            "er" => GraphModel::ErdosRenyi { nodes, p: param.parse().map_err(|_| bad())? },
            "ba" => GraphModel::BarabasiAlbert { nodes, m: param.parse().map_err(|_| bad())? },
            _ => return Err(bad()),
        };
        model.validate()?;
        Ok(ClassSpec { model, count })
    }
}
