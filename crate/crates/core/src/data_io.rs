//! Plain-text dataset directories.
//!
//! A dataset directory holds five UTF-8 files:
//!
//! | file           | content                                                   |
//! |----------------|-----------------------------------------------------------|
//! | `meta.json`    | `{"name", "num_nodes", "num_features", "num_classes"}`    |
//! | `edges.tsv`    | `u<TAB>v` per undirected edge, `u < v`                    |
//! | `features.tsv` | `node<TAB>feature<TAB>value` per nonzero feature          |
//! | `labels.tsv`   | `node<TAB>class` per labeled node                         |
//! | `splits.json`  | `{"train": [..], "val": [..], "test": [..]}`              |
//!
//! Line order inside the TSV files is irrelevant. Reversed or repeated edge
//! lines collapse to one undirected edge; self-loops are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::{atomic_write, write_json};
use crate::graph::{Graph, GraphParts, Split};
use crate::numeric::SparseMatrix;

pub const META_FILE: &str = "meta.json";
pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const SPLITS_FILE: &str = "splits.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct MetaFile {
    name: String,
    num_nodes: usize,
    num_features: usize,
    num_classes: usize,
}

/// Summary of a loaded dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
    pub num_train: usize,
    pub num_val: usize,
    pub num_test: usize,
}

impl DatasetMeta {
    pub fn of(g: &Graph) -> Self {
        Self {
            name: g.name().to_string(),
            num_nodes: g.num_nodes(),
            num_features: g.num_features(),
            num_classes: g.num_classes(),
            num_train: g.split().train.len(),
            num_val: g.split().val.len(),
            num_test: g.split().test.len(),
        }
    }
}

fn open(dir: &Path, file: &str) -> Result<String> {
    let path = dir.join(file);
    std::fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path),
        _ => Error::Io(e),
    })
}

/// Non-blank lines with 1-based line numbers, split on tabs.
fn tsv_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').split('\t').collect()))
}

fn field<T: std::str::FromStr>(file: &str, line: usize, fields: &[&str], idx: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = fields[idx].trim();
    raw.parse().map_err(|e: T::Err| Error::Parse {
        file: file.to_string(),
        line,
        message: format!("field {} `{raw}`: {e}", idx + 1),
    })
}

fn expect_arity(file: &str, line: usize, fields: &[&str], n: usize) -> Result<()> {
    if fields.len() != n {
        return Err(Error::Parse {
            file: file.to_string(),
            line,
            message: format!("expected {n} tab-separated fields, found {}", fields.len()),
        });
    }
    Ok(())
}

fn out_of_range(file: &str, line: usize, what: &str, value: usize, bound: usize) -> Error {
    Error::Validation(format!(
        "{file} line {line}: {what} {value} out of range (expected < {bound})"
    ))
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Graph> {
    let dir = dir.as_ref();
    let meta_text = open(dir, META_FILE)?;
    let edges_text = open(dir, EDGES_FILE)?;
    let features_text = open(dir, FEATURES_FILE)?;
    let labels_text = open(dir, LABELS_FILE)?;
    let splits_text = open(dir, SPLITS_FILE)?;

    let meta: MetaFile = serde_json::from_str(&meta_text).map_err(|e| Error::Parse {
        file: META_FILE.into(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let n = meta.num_nodes;
    if meta.num_classes < 2 {
        return Err(Error::Validation(format!(
            "{META_FILE}: num_classes is {}, expected at least 2",
            meta.num_classes
        )));
    }

    let mut edges = Vec::new();
    for (line, f) in tsv_lines(&edges_text) {
        expect_arity(EDGES_FILE, line, &f, 2)?;
        let u: usize = field(EDGES_FILE, line, &f, 0)?;
        let v: usize = field(EDGES_FILE, line, &f, 1)?;
        for node in [u, v] {
            if node >= n {
                return Err(out_of_range(EDGES_FILE, line, "node", node, n));
            }
        }
        if u == v {
            return Err(Error::Parse {
                file: EDGES_FILE.into(),
                line,
                message: format!("self-loop on node {u}"),
            });
        }
        edges.push((u, v));
    }

    let mut entries = BTreeMap::new();
    for (line, f) in tsv_lines(&features_text) {
        expect_arity(FEATURES_FILE, line, &f, 3)?;
        let node: usize = field(FEATURES_FILE, line, &f, 0)?;
        let feat: usize = field(FEATURES_FILE, line, &f, 1)?;
        let value: f64 = field(FEATURES_FILE, line, &f, 2)?;
        if node >= n {
            return Err(out_of_range(FEATURES_FILE, line, "node", node, n));
        }
        if feat >= meta.num_features {
            return Err(out_of_range(
                FEATURES_FILE,
                line,
                "feature index",
                feat,
                meta.num_features,
            ));
        }
        if !value.is_finite() {
            return Err(Error::Parse {
                file: FEATURES_FILE.into(),
                line,
                message: format!("non-finite value {value}"),
            });
        }
        if entries.insert((node, feat), value).is_some() {
            return Err(Error::Validation(format!(
                "{FEATURES_FILE} line {line}: duplicate entry for node {node}, feature {feat}"
            )));
        }
    }
    let triplets = entries.into_iter().map(|((r, c), v)| (r, c, v)).collect();
    let features = SparseMatrix::from_triplets(n, meta.num_features, triplets)?;

    let mut labels = vec![None; n];
    for (line, f) in tsv_lines(&labels_text) {
        expect_arity(LABELS_FILE, line, &f, 2)?;
        let node: usize = field(LABELS_FILE, line, &f, 0)?;
        let class: u32 = field(LABELS_FILE, line, &f, 1)?;
        if node >= n {
            return Err(out_of_range(LABELS_FILE, line, "node", node, n));
        }
        if class as usize >= meta.num_classes {
            return Err(out_of_range(
                LABELS_FILE,
                line,
                "class",
                class as usize,
                meta.num_classes,
            ));
        }
        if labels[node].replace(class).is_some() {
            return Err(Error::Validation(format!(
                "{LABELS_FILE} line {line}: node {node} labeled twice"
            )));
        }
    }

    let split: Split = serde_json::from_str(&splits_text).map_err(|e| Error::Parse {
        file: SPLITS_FILE.into(),
        line: e.line(),
        message: e.to_string(),
    })?;

    Graph::new(GraphParts {
        name: meta.name,
        num_nodes: n,
        num_classes: meta.num_classes,
        edges,
        features,
        labels,
        split,
    })
    .map_err(|e| match e {
        Error::Graph(msg) => Error::Validation(msg),
        other => other,
    })
}

/// Writes `g` in the directory format, with sorted lines.
pub fn store_dataset(g: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_json(
        &dir.join(META_FILE),
        &MetaFile {
            name: g.name().to_string(),
            num_nodes: g.num_nodes(),
            num_features: g.num_features(),
            num_classes: g.num_classes(),
        },
    )?;
    let mut edges = String::new();
    for &(u, v) in g.edges() {
        writeln!(edges, "{u}\t{v}").expect("write to String");
    }
    atomic_write(&dir.join(EDGES_FILE), edges.as_bytes())?;
    let mut feats = String::new();
    for r in 0..g.num_nodes() {
        for (c, v) in g.features().row(r) {
            writeln!(feats, "{r}\t{c}\t{v}").expect("write to String");
        }
    }
    atomic_write(&dir.join(FEATURES_FILE), feats.as_bytes())?;
    let mut labels = String::new();
    for (node, l) in g.labels().iter().enumerate() {
        if let Some(c) = l {
            writeln!(labels, "{node}\t{c}").expect("write to String");
        }
    }
    atomic_write(&dir.join(LABELS_FILE), labels.as_bytes())?;
    write_json(&dir.join(SPLITS_FILE), g.split())
}

/// Expected statistics of a dataset, either published reference numbers or
/// the values a directory declares about itself.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceStats {
    pub name: String,
    pub nodes: usize,
    pub edges: Option<usize>,
    pub features: usize,
    /// When set, a feature-count difference is reported but not counted as a mismatch.
    pub features_informational: bool,
    pub classes: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Relative tolerance on edge counts: public copies of the citation graphs
/// deduplicate edges slightly differently.
pub const EDGE_TOLERANCE: f64 = 0.03;

impl ReferenceStats {
    /// Published statistics of the Planetoid citation graphs.
    pub fn citation(name: &str) -> Option<Self> {
        let mk = |name: &str, nodes, edges, features, informational, classes, train| ReferenceStats {
            name: name.to_string(),
            nodes,
            edges: Some(edges),
            features,
            features_informational: informational,
            classes,
            train,
            val: 500,
            test: 1000,
        };
        match name.to_ascii_lowercase().as_str() {
            // The published Citeseer feature count equals its node count; the
            // distributed data has a different dimension.
            "citeseer" => Some(mk("citeseer", 3327, 4732, 3327, true, 6, 120)),
            "cora" => Some(mk("cora", 2708, 5429, 1433, false, 7, 140)),
            "pubmed" => Some(mk("pubmed", 19717, 44338, 500, false, 3, 60)),
            _ => None,
        }
    }
}

impl From<&DatasetMeta> for ReferenceStats {
    fn from(m: &DatasetMeta) -> Self {
        Self {
            name: m.name.clone(),
            nodes: m.num_nodes,
            edges: None,
            features: m.num_features,
            features_informational: false,
            classes: m.num_classes,
            train: m.num_train,
            val: m.num_val,
            test: m.num_test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Match,
    Mismatch,
    Informational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldCheck {
    pub field: String,
    pub expected: Option<usize>,
    pub found: usize,
    pub status: CheckStatus,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub dataset: String,
    pub reference: String,
    pub checks: Vec<FieldCheck>,
}

impl ValidationReport {
    pub fn check(&self, field: &str) -> Option<&FieldCheck> {
        self.checks.iter().find(|c| c.field == field)
    }

    pub fn mismatches(&self) -> impl Iterator<Item = &FieldCheck> {
        self.checks
            .iter()
            .filter(|c| c.status == CheckStatus::Mismatch)
    }

    pub fn all_match(&self) -> bool {
        self.mismatches().next().is_none()
    }

    pub fn render(&self) -> String {
        let mut out = format!("dataset {} vs reference {}\n", self.dataset, self.reference);
        for c in &self.checks {
            let expected = c.expected.map_or("-".to_string(), |e| e.to_string());
            let status = match c.status {
                CheckStatus::Match => "match",
                CheckStatus::Mismatch => "MISMATCH",
                CheckStatus::Informational => "info",
            };
            let _ = write!(
                out,
                "  {:<11} expected {:>7}  found {:>7}  {status}",
                c.field, expected, c.found
            );
            if let Some(note) = &c.note {
                let _ = write!(out, "  ({note})");
            }
            out.push('\n');
        }
        out
    }
}

/// Compares a loaded graph with expected statistics, field by field.
pub fn validate_against_reference(g: &Graph, reference: &ReferenceStats) -> ValidationReport {
    let exact = |field: &str, expected: usize, found: usize| FieldCheck {
        field: field.to_string(),
        expected: Some(expected),
        found,
        status: if expected == found {
            CheckStatus::Match
        } else {
            CheckStatus::Mismatch
        },
        note: None,
    };
    let mut checks = vec![exact("nodes", reference.nodes, g.num_nodes())];
    checks.push(match reference.edges {
        Some(expected) => {
            let found = g.num_edges();
            let rel = (found as f64 - expected as f64).abs() / (expected.max(1) as f64);
            FieldCheck {
                field: "edges".into(),
                expected: Some(expected),
                found,
                status: if rel <= EDGE_TOLERANCE {
                    CheckStatus::Match
                } else {
                    CheckStatus::Mismatch
                },
                note: Some(format!(
                    "relative difference {:.2}%, tolerance {:.0}%",
                    rel * 100.0,
                    EDGE_TOLERANCE * 100.0
                )),
            }
        }
        None => FieldCheck {
            field: "edges".into(),
            expected: None,
            found: g.num_edges(),
            status: CheckStatus::Informational,
            note: Some("no reference edge count".into()),
        },
    });
    let mut features = exact("features", reference.features, g.num_features());
    if reference.features_informational {
        features.note = Some(format!(
            "reference value is informational ({})",
            if features.status == CheckStatus::Match {
                "equal"
            } else {
                "differs"
            }
        ));
        features.status = CheckStatus::Informational;
    }
    checks.push(features);
    checks.push(exact("categories", reference.classes, g.num_classes()));
    checks.push(exact("train", reference.train, g.split().train.len()));
    checks.push(exact("val", reference.val, g.split().val.len()));
    checks.push(exact("test", reference.test, g.split().test.len()));
    ValidationReport {
        dataset: g.name().to_string(),
        reference: reference.name.clone(),
        checks,
    }
}
