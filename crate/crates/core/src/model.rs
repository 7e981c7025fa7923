//! Two-layer GCN classifier, the one-layer encoder used for pretraining,
//! weight snapshots and transfer.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::write_json;
use crate::graph::{normalize_adjacency, Graph};
use crate::numeric::{check_rate, ParamId, ParamStore, Real, Rng, SparseMatrix, Tape, Tensor, Var};
use crate::ssl::SslInput;

pub const THETA1: &str = "theta1";
pub const THETA2: &str = "theta2";
pub const BIAS1: &str = "bias1";
pub const BIAS2: &str = "bias2";

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub dropout: f64,
    pub bias: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            dropout: 0.5,
            bias: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        check_rate(self.dropout)
    }
}

/// Which layer feeds the link decoder during pretraining.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeDepth {
    /// The hidden representation; only `theta1` is trained and transferred.
    #[default]
    First,
    /// The pre-softmax output of the second layer; both layers transfer.
    Second,
}

/// Normalized adjacency and node features, shared by every forward pass.
#[derive(Clone, Debug)]
pub struct ModelInput<T> {
    pub adj: Arc<SparseMatrix<T>>,
    pub features: Arc<SparseMatrix<T>>,
}

impl<T: Real> ModelInput<T> {
    /// The uncorrupted graph.
    pub fn from_graph(g: &Graph) -> Self {
        Self {
            adj: Arc::clone(normalize_adjacency(g).matrix()),
            features: Arc::new(g.features().cast()),
        }
    }

    pub fn from_ssl(input: &SslInput<T>) -> Self {
        Self {
            adj: Arc::clone(input.corrupted_adj.matrix()),
            features: Arc::clone(&input.corrupted_features),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.rows()
    }
}

/// Uniform in `±sqrt(6 / (rows + cols))`.
pub fn glorot_init<T: Real>(rows: usize, cols: usize, rng: &mut Rng) -> Tensor<T> {
    let bound = (6.0 / (rows + cols).max(1) as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| T::of(rng.uniform_range(-bound, bound)))
}

/// Inverted dropout on the stored entries of a sparse matrix.
pub fn sparse_dropout<T: Real>(
    x: &Arc<SparseMatrix<T>>,
    rate: f64,
    rng: &mut Rng,
    training: bool,
) -> Result<Arc<SparseMatrix<T>>> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok(Arc::clone(x));
    }
    let keep = 1.0 - rate;
    let scale = T::of(1.0 / keep);
    Ok(Arc::new(x.map_values(|_, _, v| {
        if rng.bernoulli(keep) {
            v * scale
        } else {
            T::zero()
        }
    })))
}

/// GCN with a hidden layer (`theta1`) and, for classifiers, an output layer
/// (`theta2`).
#[derive(Clone, Debug)]
pub struct GcnModel<T> {
    store: ParamStore<T>,
    theta1: ParamId,
    bias1: Option<ParamId>,
    theta2: Option<ParamId>,
    bias2: Option<ParamId>,
    config: ModelConfig,
}

impl<T: Real> GcnModel<T> {
    fn build(
        num_features: usize,
        num_outputs: Option<usize>,
        config: ModelConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let mut store = ParamStore::new();
        let theta1 = store.add(THETA1, glorot_init(num_features, h, rng));
        let theta2 = num_outputs.map(|c| store.add(THETA2, glorot_init(h, c, rng)));
        let bias1 = config.bias.then(|| store.add(BIAS1, Tensor::zeros(1, h)));
        let bias2 = match num_outputs {
            Some(c) if config.bias => Some(store.add(BIAS2, Tensor::zeros(1, c))),
            _ => None,
        };
        Ok(Self {
            store,
            theta1,
            bias1,
            theta2,
            bias2,
            config,
        })
    }

    /// One-layer encoder `F → hidden`.
    pub fn encoder(num_features: usize, config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        Self::build(num_features, None, config, rng)
    }

    /// Two-layer classifier `F → hidden → C`.
    pub fn classifier(
        num_features: usize,
        num_classes: usize,
        config: ModelConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        Self::build(num_features, Some(num_classes), config, rng)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn theta1(&self) -> &Tensor<T> {
        &self.store.get(self.theta1).value
    }

    pub fn theta2(&self) -> Option<&Tensor<T>> {
        self.theta2.map(|id| &self.store.get(id).value)
    }

    pub fn has_output_layer(&self) -> bool {
        self.theta2.is_some()
    }

    pub fn num_features(&self) -> usize {
        self.theta1().rows()
    }

    pub fn num_outputs(&self) -> Option<usize> {
        self.theta2().map(Tensor::cols)
    }

    /// Parameters under weight decay: `theta1`, or every parameter.
    pub fn penalized(&self, all: bool) -> Vec<ParamId> {
        if all {
            self.store.iter().map(|p| p.id()).collect()
        } else {
            vec![self.theta1]
        }
    }

    fn check_input(&self, input: &ModelInput<T>) -> Result<()> {
        if input.features.cols() != self.num_features() {
            return Err(Error::Dimension {
                op: "gcn input",
                left: input.features.shape(),
                right: self.theta1().shape(),
            });
        }
        if input.adj.rows() != input.features.rows() {
            return Err(Error::Dimension {
                op: "gcn input",
                left: input.adj.shape(),
                right: input.features.shape(),
            });
        }
        Ok(())
    }

    /// `dropout(relu(Â · dropout(X) · θ1))`, N × hidden.
    pub fn encode(
        &self,
        tape: &mut Tape<T>,
        input: &ModelInput<T>,
        rng: &mut Rng,
        training: bool,
    ) -> Result<Var> {
        self.check_input(input)?;
        let rate = self.config.dropout;
        let x = sparse_dropout(&input.features, rate, rng, training)?;
        let t1 = tape.param(&self.store, self.theta1);
        let xw = tape.spmm(x, t1)?;
        let mut h = tape.spmm(Arc::clone(&input.adj), xw)?;
        if let Some(b) = self.bias1 {
            let b = tape.param(&self.store, b);
            h = tape.add_row(h, b)?;
        }
        let h = tape.relu(h);
        tape.dropout(h, rate, rng, training)
    }

    /// Pre-softmax output `Â · H · θ2`, N × C.
    pub fn logits(
        &self,
        tape: &mut Tape<T>,
        input: &ModelInput<T>,
        rng: &mut Rng,
        training: bool,
    ) -> Result<Var> {
        let theta2 = self
            .theta2
            .ok_or_else(|| Error::Usage("model has no output layer".into()))?;
        let h = self.encode(tape, input, rng, training)?;
        let t2 = tape.param(&self.store, theta2);
        let hw = tape.matmul(h, t2)?;
        let mut z = tape.spmm(Arc::clone(&input.adj), hw)?;
        if let Some(b) = self.bias2 {
            let b = tape.param(&self.store, b);
            z = tape.add_row(z, b)?;
        }
        Ok(z)
    }

    /// Row-wise class probabilities.
    pub fn classify(
        &self,
        tape: &mut Tape<T>,
        input: &ModelInput<T>,
        rng: &mut Rng,
        training: bool,
    ) -> Result<Var> {
        let z = self.logits(tape, input, rng, training)?;
        Ok(tape.softmax_rows(z))
    }

    /// Representation fed to the link decoder.
    pub fn decoder_input(
        &self,
        tape: &mut Tape<T>,
        input: &ModelInput<T>,
        depth: DecodeDepth,
        rng: &mut Rng,
        training: bool,
    ) -> Result<Var> {
        match depth {
            DecodeDepth::First => self.encode(tape, input, rng, training),
            DecodeDepth::Second => self.logits(tape, input, rng, training),
        }
    }

    /// Hidden representation with dropout off.
    pub fn embeddings(&self, input: &ModelInput<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let h = self.encode(&mut tape, input, &mut Rng::new(0), false)?;
        Ok(tape.value(h).clone())
    }

    /// Class probabilities with dropout off.
    pub fn predict(&self, input: &ModelInput<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let p = self.classify(&mut tape, input, &mut Rng::new(0), false)?;
        Ok(tape.value(p).clone())
    }
}

/// Mean over `nodes` of `−ln max(p[node, label], 1e−12)`.
pub fn masked_cross_entropy<T: Real>(
    tape: &mut Tape<T>,
    probs: Var,
    labels: &[Option<u32>],
    nodes: &[usize],
) -> Result<Var> {
    let picks = nodes
        .iter()
        .map(|&n| match labels.get(n) {
            Some(Some(c)) => Ok((n, *c as usize)),
            Some(None) => Err(Error::Data(format!("node {n} is in a loss mask but has no label"))),
            None => Err(Error::Data(format!("node {n} is outside the label table"))),
        })
        .collect::<Result<Vec<_>>>()?;
    tape.picked_nll(probs, picks, T::of(PROBABILITY_FLOOR))
}

/// `weight · Σ ‖θ‖²` over `params`.
pub fn l2_penalty<T: Real>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    params: &[ParamId],
    weight: f64,
) -> Result<Var> {
    let mut total = tape.constant(Tensor::scalar(T::zero()));
    for &id in params {
        let p = tape.param(store, id);
        let s = tape.sum_squares(p);
        total = tape.add(total, s)?;
    }
    Ok(tape.scale(total, T::of(weight)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Pretrained,
    Random,
    Finetuned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl TensorRecord {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn to_tensor<T: Real>(&self) -> Result<Tensor<T>> {
        Tensor::from_vec(self.rows, self.cols, self.data.iter().map(|&v| T::of(v)).collect())
    }
}

/// Named, shape-tagged parameter values with their provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSnapshot {
    pub format_version: u32,
    pub provenance: Provenance,
    pub seed: u64,
    pub dtype: String,
    pub tensors: Vec<TensorRecord>,
}

impl WeightSnapshot {
    pub fn of_model<T: Real>(model: &GcnModel<T>, provenance: Provenance, seed: u64) -> Self {
        Self::of_store(model.store(), provenance, seed)
    }

    pub fn of_store<T: Real>(store: &ParamStore<T>, provenance: Provenance, seed: u64) -> Self {
        let tensors = store
            .iter()
            .map(|p| TensorRecord {
                name: p.name().to_string(),
                rows: p.shape().0,
                cols: p.shape().1,
                data: p.value.data().iter().map(|v| v.to_f64_lossless()).collect(),
            })
            .collect();
        Self {
            format_version: SNAPSHOT_FORMAT_VERSION,
            provenance,
            seed,
            dtype: T::DTYPE.to_string(),
            tensors,
        }
    }

    /// Encoder weights drawn exactly as a classifier with `seed` draws its
    /// own first layer, so fine-tuning from it reproduces the baseline.
    pub fn random<T: Real>(num_features: usize, config: ModelConfig, seed: u64) -> Result<Self> {
        let enc = GcnModel::<T>::encoder(num_features, config, &mut init_rng(seed))?;
        Ok(Self::of_model(&enc, Provenance::Random, seed))
    }

    pub fn get(&self, name: &str) -> Option<&TensorRecord> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != SNAPSHOT_FORMAT_VERSION {
            return Err(Error::Snapshot(format!(
                "unsupported format version {} (expected {SNAPSHOT_FORMAT_VERSION})",
                self.format_version
            )));
        }
        let mut names = BTreeSet::new();
        for t in &self.tensors {
            if !names.insert(t.name.as_str()) {
                return Err(Error::Snapshot(format!("duplicate tensor `{}`", t.name)));
            }
            if t.data.len() != t.rows * t.cols {
                return Err(Error::Snapshot(format!(
                    "tensor `{}` declares {}×{} but stores {} values",
                    t.name,
                    t.rows,
                    t.cols,
                    t.data.len()
                )));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Snapshot(format!("tensor `{}` has non-finite values", t.name)));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => e.into(),
        })?;
        let snap: Self = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Snapshot(format!("{}: {e}", path.display())))?;
        snap.validate()?;
        Ok(snap)
    }
}

/// Stream that initializes model weights for a run seed.
pub fn init_rng(seed: u64) -> Rng {
    Rng::new(seed).fork("init")
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferReport {
    pub transferred: Vec<String>,
    /// Model parameters the snapshot does not provide.
    pub skipped: Vec<String>,
    /// Snapshot tensors the model has no slot for.
    pub unused: Vec<String>,
}

/// Copies every snapshot tensor whose name matches a model parameter.
/// `theta1` is required; any shape mismatch fails before anything is copied.
pub fn transfer_weights<T: Real>(
    snapshot: &WeightSnapshot,
    model: &mut GcnModel<T>,
) -> Result<TransferReport> {
    snapshot.validate()?;
    let mut report = TransferReport::default();
    let mut staged = Vec::new();
    for p in model.store().iter() {
        match snapshot.get(p.name()) {
            Some(t) if t.shape() != p.shape() => {
                return Err(Error::Transfer {
                    name: p.name().to_string(),
                    expected: p.shape(),
                    found: t.shape(),
                })
            }
            Some(t) => {
                staged.push((p.id(), t.to_tensor::<T>()?));
                report.transferred.push(p.name().to_string());
            }
            None if p.name() == THETA1 => {
                return Err(Error::Transfer {
                    name: THETA1.into(),
                    expected: p.shape(),
                    found: (0, 0),
                })
            }
            None => report.skipped.push(p.name().to_string()),
        }
    }
    report.unused = snapshot
        .tensors
        .iter()
        .filter(|t| model.store().by_name(&t.name).is_none())
        .map(|t| t.name.clone())
        .collect();
    for (id, value) in staged {
        model.store_mut().get_mut(id).assign(value)?;
    }
    Ok(report)
}
