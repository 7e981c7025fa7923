//! Contextual stochastic block model graphs with sparse binary features, for
//! tests and benchmarks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphParts, Split};
use crate::numeric::{Rng, SparseMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub name: String,
    pub nodes: usize,
    pub classes: usize,
    pub features: usize,
    pub avg_degree: f64,
    /// Probability that an edge joins two nodes of the same class.
    pub homophily: f64,
    /// Nonzero features per node.
    pub active_features: usize,
    /// Probability that an active feature comes from the node's class block.
    pub signal: f64,
    pub train_per_class: usize,
    pub val: usize,
    pub test: usize,
}

impl SyntheticConfig {
    pub fn small() -> Self {
        Self {
            name: "synthetic-small".into(),
            nodes: 120,
            classes: 3,
            features: 60,
            avg_degree: 4.0,
            homophily: 0.8,
            active_features: 6,
            signal: 0.6,
            train_per_class: 5,
            val: 30,
            test: 60,
        }
    }

    /// Same node, edge, feature and split counts as the Cora citation graph.
    pub fn cora_sized() -> Self {
        Self {
            name: "synthetic-cora".into(),
            nodes: 2708,
            classes: 7,
            features: 1433,
            avg_degree: 2.0 * 5429.0 / 2708.0,
            homophily: 0.8,
            active_features: 18,
            signal: 0.5,
            train_per_class: 20,
            val: 500,
            test: 1000,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.classes >= 2
            && self.nodes >= self.classes
            && self.features >= self.classes
            && self.active_features <= self.features / self.classes
            && (0.0..=1.0).contains(&self.homophily)
            && (0.0..=1.0).contains(&self.signal)
            && self.avg_degree >= 0.0
            && self.train_per_class * self.classes + self.val + self.test <= self.nodes;
        if !ok {
            return Err(Error::Config(format!("inconsistent synthetic graph settings {self:?}")));
        }
        Ok(())
    }
}

/// Draws a graph; node `i` belongs to class `i % classes`.
pub fn generate(cfg: &SyntheticConfig, seed: u64) -> Result<Graph> {
    cfg.validate()?;
    let root = Rng::new(seed);
    let (n, c) = (cfg.nodes, cfg.classes);
    let class = |i: usize| i % c;
    let per_class = |k: usize| (0..n).filter(move |i| i % c == k);

    let mut rng = root.fork("edges");
    let target = (cfg.avg_degree * n as f64 / 2.0).round() as usize;
    let mut edges = Vec::with_capacity(target);
    while edges.len() < target {
        let u = rng.below(n);
        let v = if rng.bernoulli(cfg.homophily) {
            let members = n / c + usize::from(class(u) < n % c);
            class(u) + c * rng.below(members)
        } else {
            rng.below(n)
        };
        if u != v {
            edges.push((u, v));
        }
    }

    let mut rng = root.fork("features");
    let block = cfg.features / c;
    let mut triplets = Vec::with_capacity(n * cfg.active_features);
    for i in 0..n {
        let mut cols = std::collections::BTreeSet::new();
        while cols.len() < cfg.active_features {
            let col = if rng.bernoulli(cfg.signal) {
                class(i) * block + rng.below(block)
            } else {
                rng.below(cfg.features)
            };
            cols.insert(col);
        }
        triplets.extend(cols.into_iter().map(|col| (i, col, 1.0)));
    }

    let mut rng = root.fork("split");
    let mut train = Vec::new();
    let mut rest = Vec::new();
    for k in 0..c {
        let mut members: Vec<usize> = per_class(k).collect();
        rng.shuffle(&mut members);
        train.extend_from_slice(&members[..cfg.train_per_class]);
        rest.extend_from_slice(&members[cfg.train_per_class..]);
    }
    rng.shuffle(&mut rest);
    let mut val = rest[..cfg.val].to_vec();
    let mut test = rest[cfg.val..cfg.val + cfg.test].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();

    Graph::new(GraphParts {
        name: cfg.name.clone(),
        num_nodes: n,
        num_classes: c,
        edges,
        features: SparseMatrix::from_triplets(n, cfg.features, triplets)?,
        labels: (0..n).map(|i| Some(class(i) as u32)).collect(),
        split: Split { train, val, test },
    })
}
