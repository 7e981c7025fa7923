//! Pretext-task construction: edge removal, feature covering, the
//! inner-product link decoder and the positively weighted reconstruction
//! loss.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, Graph, NormalizedAdjacency};
use crate::numeric::{PairTerm, Real, Rng, SparseMatrix, Tape, Var};

/// Which corruption the pretext input receives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Randomly remove links.
    #[serde(rename = "rrl")]
    RemoveLinks,
    /// Randomly cover features.
    #[serde(rename = "rcf")]
    CoverFeatures,
    #[serde(rename = "both")]
    Both,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::RemoveLinks, Strategy::CoverFeatures, Strategy::Both];

    pub fn removes_links(self) -> bool {
        matches!(self, Strategy::RemoveLinks | Strategy::Both)
    }

    pub fn covers_features(self) -> bool {
        matches!(self, Strategy::CoverFeatures | Strategy::Both)
    }

    pub fn label(self) -> &'static str {
        match self {
            Strategy::RemoveLinks => "RRL",
            Strategy::CoverFeatures => "RCF",
            Strategy::Both => "RRL&RCF",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::RemoveLinks => "rrl",
            Strategy::CoverFeatures => "rcf",
            Strategy::Both => "both",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rrl" => Ok(Strategy::RemoveLinks),
            "rcf" => Ok(Strategy::CoverFeatures),
            "both" | "rrl&rcf" | "rrl+rcf" => Ok(Strategy::Both),
            other => Err(Error::Config(format!(
                "unknown strategy `{other}` (expected rrl, rcf or both)"
            ))),
        }
    }
}

/// What the cover fraction counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverMode {
    /// `round(p · nnz)` of a row's nonzero entries are zeroed.
    #[default]
    Nonzero,
    /// `round(p · F)` of a row's positions are chosen; covering a zero is a no-op.
    AllEntries,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SslConfig {
    pub strategy: Strategy,
    pub remove_fraction: f64,
    pub cover_fraction: f64,
    #[serde(default)]
    pub cover_mode: CoverMode,
}

impl Default for SslConfig {
    fn default() -> Self {
        Self::uniform(Strategy::Both, 0.4)
    }
}

impl SslConfig {
    pub fn new(strategy: Strategy, remove_fraction: f64, cover_fraction: f64) -> Self {
        Self {
            strategy,
            remove_fraction,
            cover_fraction,
            cover_mode: CoverMode::default(),
        }
    }

    /// Both fractions set to `p`; each strategy reads only its own.
    pub fn uniform(strategy: Strategy, p: f64) -> Self {
        Self::new(strategy, p, p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("remove", self.remove_fraction), ("cover", self.cover_fraction)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} fraction {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Corrupted input and uncorrupted target of one pretraining run.
#[derive(Clone, Debug)]
pub struct SslInput<T> {
    pub corrupted_adj: NormalizedAdjacency<T>,
    pub corrupted_features: Arc<SparseMatrix<T>>,
    /// Binary adjacency of the original graph.
    pub target: Arc<SparseMatrix<T>>,
    pub positive_weight: f64,
    pub kept_edges: usize,
    pub kept_feature_nonzeros: usize,
}

fn count(fraction: f64, total: usize) -> usize {
    ((fraction * total as f64).round() as usize).min(total)
}

/// Removes exactly `round(p · |E|)` undirected edges chosen uniformly
/// without replacement; returns the survivors in sorted order.
pub fn rrl_mask(g: &Graph, p: f64, rng: &mut Rng) -> Vec<(u32, u32)> {
    let total = g.num_edges();
    let remove = count(p, total);
    let mut dropped = vec![false; total];
    for i in rng.sample_indices(total, remove) {
        dropped[i] = true;
    }
    g.edges()
        .iter()
        .zip(dropped)
        .filter_map(|(&e, d)| (!d).then_some(e))
        .collect()
}

/// Zeroes feature entries row by row, see [`CoverMode`].
pub fn rcf_mask(
    features: &SparseMatrix<f64>,
    p: f64,
    mode: CoverMode,
    rng: &mut Rng,
) -> SparseMatrix<f64> {
    let cols = features.cols();
    let mut rows = Vec::with_capacity(features.rows());
    for r in 0..features.rows() {
        let entries: Vec<(usize, f64)> = features.row(r).collect();
        let covered: Vec<bool> = match mode {
            CoverMode::Nonzero => {
                let mut c = vec![false; entries.len()];
                for i in rng.sample_indices(entries.len(), count(p, entries.len())) {
                    c[i] = true;
                }
                c
            }
            CoverMode::AllEntries => {
                let mut hit = vec![false; cols];
                for i in rng.sample_indices(cols, count(p, cols)) {
                    hit[i] = true;
                }
                entries.iter().map(|&(c, _)| hit[c]).collect()
            }
        };
        rows.push(
            entries
                .into_iter()
                .zip(covered)
                .filter_map(|((c, v), hide)| (!hide).then_some((c as u32, v)))
                .collect(),
        );
    }
    SparseMatrix::from_sorted_rows(cols, rows)
}

/// Ratio of non-links to links in the binary adjacency (diagonal included
/// among the non-links): `(N² − 2|E|) / 2|E|`.
pub fn positive_weight(g: &Graph) -> Result<f64> {
    let nnz = 2 * g.num_edges();
    if nnz == 0 {
        return Err(Error::Degenerate(
            "positive weight is undefined for a graph without edges".into(),
        ));
    }
    let n = g.num_nodes() as f64;
    Ok((n * n - nnz as f64) / nnz as f64)
}

/// Binary adjacency used as the reconstruction target.
pub fn link_target<T: Real>(g: &Graph) -> Arc<SparseMatrix<T>> {
    Arc::new(g.adjacency())
}

/// Pairwise logits `H · Hᵀ`; the sigmoid is folded into the loss.
pub fn link_decoder_logits<T: Real>(tape: &mut Tape<T>, h: Var) -> Var {
    tape.gram(h)
}

/// Mean over all N² entries of the weighted binary cross-entropy between
/// `sigmoid(logits)` and `target`, positives scaled by `weight`.
pub fn weighted_link_loss<T: Real>(
    tape: &mut Tape<T>,
    logits: Var,
    target: &Arc<SparseMatrix<T>>,
    weight: f64,
) -> Result<Var> {
    if weight <= 0.0 || !weight.is_finite() {
        return Err(Error::Config(format!("positive weight {weight} must be positive")));
    }
    tape.weighted_bce(logits, Arc::clone(target), T::of(weight))
}

/// [`weighted_link_loss`] of the decoder logits of `h` in one fused step
/// over the upper triangle; the N × N logits are never stored.
pub fn fused_link_loss<T: Real>(
    tape: &mut Tape<T>,
    h: Var,
    target: &Arc<SparseMatrix<T>>,
    weight: f64,
) -> Result<Var> {
    if weight <= 0.0 || !weight.is_finite() {
        return Err(Error::Config(format!("positive weight {weight} must be positive")));
    }
    tape.gram_weighted_bce(h, Arc::clone(target), T::of(weight))
}

/// Unbiased, memory-bounded estimate of [`weighted_link_loss`] on the
/// decoder logits of `h`.
///
/// Every link contributes exactly; `neg_per_pos` non-links per directed link
/// are drawn uniformly from the N² − 2|E| non-link cells (rejection
/// sampling, diagonal included) and reweighted so that the expectation is
/// the full mean.
pub fn sampled_link_loss<T: Real>(
    tape: &mut Tape<T>,
    h: Var,
    g: &Graph,
    neg_per_pos: usize,
    rng: &mut Rng,
) -> Result<Var> {
    if neg_per_pos == 0 {
        return Err(Error::Config("neg_per_pos must be at least 1".into()));
    }
    if tape.value(h).rows() != g.num_nodes() {
        return Err(Error::Dimension {
            op: "sampled_link_loss",
            left: tape.value(h).shape(),
            right: (g.num_nodes(), g.num_nodes()),
        });
    }
    let w = positive_weight(g)?;
    let n = g.num_nodes();
    let nnz = 2 * g.num_edges();
    let cells = (n * n) as f64;
    let negatives = nnz * neg_per_pos;
    let neg_weight = (cells - nnz as f64) / negatives as f64;
    let mut terms = Vec::with_capacity(g.num_edges() + negatives);
    // (u, v) and (v, u) share a logit.
    for &(u, v) in g.edges() {
        terms.push(PairTerm {
            i: u,
            j: v,
            positive: true,
            weight: T::of(2.0 * w),
        });
    }
    while terms.len() < g.num_edges() + negatives {
        let (i, j) = (rng.below(n), rng.below(n));
        if i != j && g.has_edge(i, j) {
            continue;
        }
        terms.push(PairTerm {
            i: i as u32,
            j: j as u32,
            positive: false,
            weight: T::of(neg_weight),
        });
    }
    tape.pair_bce(h, terms, T::of(1.0 / cells))
}

/// Applies the configured corruption once and assembles the pretext input.
///
/// Edge removal and feature covering draw from separate forks of `rng`, so
/// the removed edges for a seed are the same under [`Strategy::RemoveLinks`]
/// and [`Strategy::Both`].
pub fn build_ssl_input<T: Real>(g: &Graph, cfg: &SslConfig, rng: &Rng) -> Result<SslInput<T>> {
    cfg.validate()?;
    let positive_weight = positive_weight(g)?;
    let corrupted = if cfg.strategy.removes_links() {
        g.with_edges(rrl_mask(g, cfg.remove_fraction, &mut rng.fork("rrl")))
    } else {
        g.clone()
    };
    let features = if cfg.strategy.covers_features() {
        rcf_mask(
            g.features(),
            cfg.cover_fraction,
            cfg.cover_mode,
            &mut rng.fork("rcf"),
        )
    } else {
        g.features().clone()
    };
    Ok(SslInput {
        corrupted_adj: normalize_adjacency(&corrupted),
        kept_edges: corrupted.num_edges(),
        kept_feature_nonzeros: features.nnz(),
        corrupted_features: Arc::new(features.cast()),
        target: link_target(g),
        positive_weight,
    })
}
