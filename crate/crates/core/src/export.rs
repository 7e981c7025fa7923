//! Hidden-representation export as tab-separated text.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::fsutil::atomic_write;
use crate::graph::Graph;
use crate::model::{transfer_weights, GcnModel, ModelConfig, ModelInput, WeightSnapshot};
use crate::numeric::{Real, Rng};

/// Header `node  label  v1 … vH`, then one row per node. Unlabeled nodes get
/// label `-1`.
pub fn embeddings_tsv<T: Real>(model: &GcnModel<T>, g: &Graph) -> Result<String> {
    let h = model.embeddings(&ModelInput::from_graph(g))?;
    let mut out = String::from("node\tlabel");
    for k in 1..=h.cols() {
        let _ = write!(out, "\tv{k}");
    }
    out.push('\n');
    for n in 0..h.rows() {
        let label = g.label(n).map_or(-1, i64::from);
        let _ = write!(out, "{n}\t{label}");
        for v in h.row(n) {
            let _ = write!(out, "\t{}", v.to_f64_lossless());
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes [`embeddings_tsv`] atomically; returns the number of data rows.
pub fn export_embeddings<T: Real>(model: &GcnModel<T>, g: &Graph, out: &Path) -> Result<usize> {
    let text = embeddings_tsv(model, g)?;
    atomic_write(out, text.as_bytes())?;
    Ok(g.num_nodes())
}

/// Encoder rebuilt from a snapshot's `theta1` (and bias, when present).
pub fn encoder_from_snapshot<T: Real>(snapshot: &WeightSnapshot, num_features: usize) -> Result<GcnModel<T>> {
    let hidden = snapshot
        .get(crate::model::THETA1)
        .map_or(ModelConfig::default().hidden, |t| t.cols);
    let config = ModelConfig {
        hidden,
        bias: snapshot.get(crate::model::BIAS1).is_some(),
        ..ModelConfig::default()
    };
    let mut enc = GcnModel::encoder(num_features, config, &mut Rng::new(snapshot.seed))?;
    transfer_weights(snapshot, &mut enc)?;
    Ok(enc)
}
