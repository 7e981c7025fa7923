//! Undirected attributed graphs and the renormalized adjacency
//! `D̃^{-1/2} (A + I) D̃^{-1/2}`.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Real, SparseMatrix, Tensor};

/// Largest node count [`adjacency_dense`] will materialize by default.
pub const DEFAULT_DENSE_CAP: usize = 8192;

/// Train/validation/test node lists.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn nodes(&self, kind: SplitKind) -> &[usize] {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Val => &self.val,
            SplitKind::Test => &self.test,
        }
    }
}

/// Raw pieces of a graph, validated by [`Graph::new`].
#[derive(Clone, Debug)]
pub struct GraphParts {
    pub name: String,
    pub num_nodes: usize,
    pub num_classes: usize,
    /// Undirected pairs in either orientation; duplicates are merged.
    pub edges: Vec<(usize, usize)>,
    /// N×F feature matrix.
    pub features: SparseMatrix<f64>,
    pub labels: Vec<Option<u32>>,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    name: String,
    num_nodes: usize,
    num_classes: usize,
    edges: Vec<(u32, u32)>,
    features: SparseMatrix<f64>,
    labels: Vec<Option<u32>>,
    split: Split,
}

impl Graph {
    pub fn new(parts: GraphParts) -> Result<Self> {
        let GraphParts {
            name,
            num_nodes,
            num_classes,
            edges,
            features,
            labels,
            split,
        } = parts;
        let n = num_nodes;
        if n > u32::MAX as usize {
            return Err(Error::Graph(format!("{n} nodes exceed the supported maximum")));
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Graph(format!(
                    "edge ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            if u == v {
                return Err(Error::Graph(format!("self-loop on node {u}")));
            }
            set.insert((u.min(v) as u32, u.max(v) as u32));
        }
        if features.rows() != n {
            return Err(Error::Graph(format!(
                "feature matrix has {} rows for {n} nodes",
                features.rows()
            )));
        }
        if labels.len() != n {
            return Err(Error::Graph(format!(
                "{} label slots for {n} nodes",
                labels.len()
            )));
        }
        if let Some((node, c)) = labels
            .iter()
            .enumerate()
            .find_map(|(i, l)| l.filter(|&c| c as usize >= num_classes).map(|c| (i, c)))
        {
            return Err(Error::Graph(format!(
                "node {node} has class {c}, but there are only {num_classes} classes"
            )));
        }
        let mut seen = vec![false; n];
        for (kind, list) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
            for &node in list {
                if node >= n {
                    return Err(Error::Graph(format!(
                        "{kind} split references node {node} outside 0..{n}"
                    )));
                }
                if seen[node] {
                    return Err(Error::Graph(format!(
                        "node {node} appears twice across the splits"
                    )));
                }
                seen[node] = true;
                if labels[node].is_none() {
                    return Err(Error::Graph(format!("{kind} node {node} has no label")));
                }
            }
        }
        Ok(Self {
            name,
            num_nodes: n,
            num_classes,
            edges: set.into_iter().collect(),
            features,
            labels,
            split,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Sorted unique `(u, v)` pairs with `u < v`.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn features(&self) -> &SparseMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[Option<u32>] {
        &self.labels
    }

    pub fn label(&self, node: usize) -> Option<u32> {
        self.labels[node]
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        let key = (u.min(v) as u32, u.max(v) as u32);
        self.edges.binary_search(&key).is_ok()
    }

    /// Same nodes, features and labels with a subset of the edges.
    pub fn with_edges(&self, edges: Vec<(u32, u32)>) -> Self {
        debug_assert!(edges.windows(2).all(|w| w[0] < w[1]));
        Self {
            edges,
            ..self.clone()
        }
    }

    pub fn with_features(&self, features: SparseMatrix<f64>) -> Result<Self> {
        if features.shape() != self.features.shape() {
            return Err(Error::Dimension {
                op: "with_features",
                left: self.features.shape(),
                right: features.shape(),
            });
        }
        Ok(Self {
            features,
            ..self.clone()
        })
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.num_nodes];
        for &(u, v) in &self.edges {
            deg[u as usize] += 1;
            deg[v as usize] += 1;
        }
        deg
    }

    /// Binary symmetric adjacency pattern with an empty diagonal.
    pub fn adjacency<T: Real>(&self) -> SparseMatrix<T> {
        let mut rows: Vec<Vec<(u32, T)>> = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            rows[u as usize].push((v, T::one()));
            rows[v as usize].push((u, T::one()));
        }
        for row in &mut rows {
            row.sort_unstable_by_key(|&(c, _)| c);
        }
        SparseMatrix::from_sorted_rows(self.num_nodes, rows)
            .into_symmetric()
            .expect("undirected adjacency is symmetric")
    }
}

/// The propagation matrix shared by every GCN layer.
#[derive(Clone, Debug)]
pub struct NormalizedAdjacency<T> {
    matrix: Arc<SparseMatrix<T>>,
    source_edges: usize,
}

impl<T: Real> NormalizedAdjacency<T> {
    pub fn matrix(&self) -> &Arc<SparseMatrix<T>> {
        &self.matrix
    }

    pub fn source_edges(&self) -> usize {
        self.source_edges
    }

    /// Identity propagation: every node only sees itself.
    pub fn identity(n: usize) -> Self {
        Self {
            matrix: Arc::new(SparseMatrix::identity(n)),
            source_edges: 0,
        }
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` where `D̃` holds the row sums of `A + I`.
///
/// Entry `(i, j)` is `1 / sqrt(d̃_i · d̃_j)`, computed in `f64` from the same
/// product for both orientations, so the result is bitwise symmetric.
pub fn normalize_adjacency<T: Real>(g: &Graph) -> NormalizedAdjacency<T> {
    let deg: Vec<f64> = g.degrees().into_iter().map(|d| d as f64 + 1.0).collect();
    let mut rows: Vec<Vec<(u32, T)>> = (0..g.num_nodes())
        .map(|i| vec![(i as u32, T::of(1.0 / deg[i]))])
        .collect();
    for &(u, v) in g.edges() {
        let w = T::of(1.0 / (deg[u as usize] * deg[v as usize]).sqrt());
        rows[u as usize].push((v, w));
        rows[v as usize].push((u, w));
    }
    for row in &mut rows {
        row.sort_unstable_by_key(|&(c, _)| c);
    }
    let matrix = SparseMatrix::from_sorted_rows(g.num_nodes(), rows)
        .into_symmetric()
        .expect("normalized adjacency is symmetric by construction");
    NormalizedAdjacency {
        matrix: Arc::new(matrix),
        source_edges: g.num_edges(),
    }
}

/// Dense binary adjacency, refusing graphs with more than `cap` nodes.
pub fn adjacency_dense<T: Real>(g: &Graph, cap: usize) -> Result<Tensor<T>> {
    let n = g.num_nodes();
    if n > cap {
        return Err(Error::Resource(format!(
            "dense adjacency of {n} nodes exceeds the cap of {cap}"
        )));
    }
    let mut t = Tensor::zeros(n, n);
    for &(u, v) in g.edges() {
        t.set(u as usize, v as usize, T::one());
        t.set(v as usize, u as usize, T::one());
    }
    Ok(t)
}

/// Inverse of [`adjacency_dense`]: upper-triangle nonzeros as `(u, v)` pairs.
pub fn edges_from_dense<T: Real>(t: &Tensor<T>) -> Vec<(u32, u32)> {
    let mut edges = Vec::new();
    for u in 0..t.rows() {
        for v in u + 1..t.cols() {
            if t.get(u, v) != T::zero() {
                edges.push((u as u32, v as u32));
            }
        }
    }
    edges
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}

pub fn degree_stats(g: &Graph) -> DegreeStats {
    let deg = g.degrees();
    if deg.is_empty() {
        return DegreeStats {
            min: 0,
            max: 0,
            mean: 0.0,
        };
    }
    DegreeStats {
        min: *deg.iter().min().expect("nonempty"),
        max: *deg.iter().max().expect("nonempty"),
        mean: 2.0 * g.num_edges() as f64 / g.num_nodes() as f64,
    }
}
