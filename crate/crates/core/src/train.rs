//! Pretraining on the link-reconstruction pretext task, fine-tuning for node
//! classification and evaluation.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, SplitKind, DEFAULT_DENSE_CAP};
use crate::model::{
    init_rng, l2_penalty, masked_cross_entropy, transfer_weights, DecodeDepth, GcnModel,
    ModelConfig, ModelInput, Provenance, TransferReport, WeightSnapshot,
};
use crate::numeric::{AdamConfig, AdamState, Real, Rng, Tape, Tensor};
use crate::ssl::{
    build_ssl_input, fused_link_loss, sampled_link_loss, SslConfig,
    SslInput,
};

/// How the pretext loss is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkLossMode {
    /// Full N × N loss up to the dense cap, sampled beyond it.
    #[default]
    Auto,
    Full,
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub ssl: SslConfig,
    pub max_epochs: usize,
    /// `None` trains for exactly `max_epochs`.
    pub patience: Option<usize>,
    pub adam: AdamConfig,
    pub model: ModelConfig,
    pub weight_decay: f64,
    pub decay_all: bool,
    pub decode_depth: DecodeDepth,
    pub link_loss: LinkLossMode,
    pub neg_per_pos: usize,
    pub dense_cap: usize,
    /// Draw a fresh corruption every epoch instead of once per run.
    pub resample_each_epoch: bool,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            ssl: SslConfig::default(),
            max_epochs: 20_000,
            patience: Some(5_000),
            adam: AdamConfig::default(),
            model: ModelConfig::default(),
            weight_decay: 5e-4,
            decay_all: false,
            decode_depth: DecodeDepth::default(),
            link_loss: LinkLossMode::default(),
            neg_per_pos: 5,
            dense_cap: DEFAULT_DENSE_CAP,
            resample_each_epoch: false,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.ssl.validate()?;
        self.adam.validate()?;
        self.model.validate()?;
        validate_schedule(self.max_epochs, self.patience)?;
        validate_decay(self.weight_decay)?;
        if self.neg_per_pos == 0 {
            return Err(Error::Config("neg_per_pos must be at least 1".into()));
        }
        Ok(())
    }

    fn sampled(&self, num_nodes: usize) -> bool {
        match self.link_loss {
            LinkLossMode::Full => false,
            LinkLossMode::Sampled => true,
            LinkLossMode::Auto => num_nodes > self.dense_cap,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub max_epochs: usize,
    pub patience: Option<usize>,
    pub adam: AdamConfig,
    pub model: ModelConfig,
    pub weight_decay: f64,
    pub decay_all: bool,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            max_epochs: 1_000,
            patience: Some(100),
            adam: AdamConfig::default(),
            model: ModelConfig::default(),
            weight_decay: 5e-4,
            decay_all: false,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        self.model.validate()?;
        validate_schedule(self.max_epochs, self.patience)?;
        validate_decay(self.weight_decay)
    }
}

fn validate_schedule(max_epochs: usize, patience: Option<usize>) -> Result<()> {
    if max_epochs == 0 {
        return Err(Error::Config("max_epochs must be positive".into()));
    }
    match patience {
        Some(0) => Err(Error::Config("patience must be positive".into())),
        Some(p) if p > max_epochs => Err(Error::Config(format!(
            "patience {p} exceeds max_epochs {max_epochs}"
        ))),
        _ => Ok(()),
    }
}

fn validate_decay(w: f64) -> Result<()> {
    if !(w >= 0.0 && w.is_finite()) {
        return Err(Error::Config(format!("weight decay {w} must be finite and non-negative")));
    }
    Ok(())
}

fn scalar<T: Real>(tape: &Tape<T>, v: crate::numeric::Var) -> Result<f64> {
    Ok(tape.value(v).item()?.to_f64_lossless())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainOutcome {
    pub snapshot: WeightSnapshot,
    pub initial_loss: f64,
    pub best_loss: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub sampled_loss: bool,
    /// Pretext loss of every epoch, without the weight-decay term.
    pub history: Vec<f64>,
}

/// Trains the encoder to reconstruct the uncorrupted adjacency from the
/// corrupted input and returns the weights with the lowest pretext loss.
pub fn pretrain<T: Real>(g: &Graph, cfg: &PretrainConfig, seed: u64) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let root = Rng::new(seed);
    let corrupt = root.fork("corrupt");
    let mut dropout = root.fork("pretrain-dropout");
    let mut negatives = root.fork("negatives");
    let mut model = match cfg.decode_depth {
        DecodeDepth::First => GcnModel::<T>::encoder(g.num_features(), cfg.model, &mut init_rng(seed))?,
        DecodeDepth::Second => GcnModel::<T>::classifier(
            g.num_features(),
            g.num_classes(),
            cfg.model,
            &mut init_rng(seed),
        )?,
    };
    let sampled = cfg.sampled(g.num_nodes());
    let mut ssl: SslInput<T> = build_ssl_input(g, &cfg.ssl, &corrupt)?;
    let mut input = ModelInput::from_ssl(&ssl);
    let penalized = model.penalized(cfg.decay_all);
    let mut adam = AdamState::new(cfg.adam, model.store());
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.store().values());
    for epoch in 0..cfg.max_epochs {
        if cfg.resample_each_epoch && epoch > 0 {
            ssl = build_ssl_input(g, &cfg.ssl, &corrupt.fork_index("epoch", epoch as u64))?;
            input = ModelInput::from_ssl(&ssl);
        }
        let mut tape = Tape::new();
        let h = model.decoder_input(&mut tape, &input, cfg.decode_depth, &mut dropout, true)?;
        let link = if sampled {
            sampled_link_loss(&mut tape, h, g, cfg.neg_per_pos, &mut negatives)?
        } else {
            fused_link_loss(&mut tape, h, &ssl.target, ssl.positive_weight)?
        };
        let decay = l2_penalty(&mut tape, model.store(), &penalized, cfg.weight_decay)?;
        let total = tape.add(link, decay)?;
        let loss = scalar(&tape, link)?;
        if !loss.is_finite() || !scalar(&tape, total)?.is_finite() {
            return Err(Error::Divergence {
                phase: "pretraining",
                epoch,
                loss,
            });
        }
        history.push(loss);
        if loss < best.0 {
            best = (loss, epoch, model.store().values());
        }
        tape.backward(total, model.store_mut())?;
        adam.step(model.store_mut())?;
        if epoch % 500 == 0 {
            debug!("pretrain epoch {epoch}: link loss {loss:.6}, best {:.6}", best.0);
        }
        if cfg.patience.is_some_and(|p| epoch - best.1 >= p) {
            break;
        }
    }
    model.store_mut().load_values(&best.2)?;
    Ok(PretrainOutcome {
        snapshot: WeightSnapshot::of_model(&model, Provenance::Pretrained, seed),
        initial_loss: history[0],
        best_loss: best.0,
        best_epoch: best.1,
        epochs_run: history.len(),
        sampled_loss: sampled,
        history,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct FinetuneOutcome<T> {
    pub model: GcnModel<T>,
    pub transfer: Option<TransferReport>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub epochs_run: usize,
    pub history: Vec<EpochMetrics>,
}

/// Trains the classifier on the uncorrupted graph, optionally starting from
/// transferred weights, and restores the epoch with the lowest validation
/// cross-entropy.
pub fn finetune<T: Real>(
    g: &Graph,
    init: Option<&WeightSnapshot>,
    cfg: &FinetuneConfig,
    seed: u64,
) -> Result<FinetuneOutcome<T>> {
    cfg.validate()?;
    let train = g.split().nodes(SplitKind::Train);
    let val = g.split().nodes(SplitKind::Val);
    if train.is_empty() || val.is_empty() {
        return Err(Error::Usage(
            "fine-tuning needs non-empty train and validation splits".into(),
        ));
    }
    let mut model =
        GcnModel::<T>::classifier(g.num_features(), g.num_classes(), cfg.model, &mut init_rng(seed))?;
    let transfer = init.map(|s| transfer_weights(s, &mut model)).transpose()?;
    let mut dropout = Rng::new(seed).fork("finetune-dropout");
    let input = ModelInput::<T>::from_graph(g);
    let penalized = model.penalized(cfg.decay_all);
    let mut adam = AdamState::new(cfg.adam, model.store());
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.store().values());
    for epoch in 0..cfg.max_epochs {
        let val_loss = {
            let mut tape = Tape::new();
            let p = model.classify(&mut tape, &input, &mut dropout, false)?;
            let l = masked_cross_entropy(&mut tape, p, g.labels(), val)?;
            scalar(&tape, l)?
        };
        let mut tape = Tape::new();
        let p = model.classify(&mut tape, &input, &mut dropout, true)?;
        let ce = masked_cross_entropy(&mut tape, p, g.labels(), train)?;
        let decay = l2_penalty(&mut tape, model.store(), &penalized, cfg.weight_decay)?;
        let total = tape.add(ce, decay)?;
        let train_loss = scalar(&tape, total)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Divergence {
                phase: "fine-tuning",
                epoch,
                loss: if train_loss.is_finite() { val_loss } else { train_loss },
            });
        }
        history.push(EpochMetrics {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best.0 {
            best = (val_loss, epoch, model.store().values());
        }
        if cfg.patience.is_some_and(|p| epoch - best.1 >= p) {
            break;
        }
        tape.backward(total, model.store_mut())?;
        adam.step(model.store_mut())?;
    }
    model.store_mut().load_values(&best.2)?;
    debug!(
        "fine-tuning stopped after {} epochs, best validation loss {:.5} at epoch {}",
        history.len(),
        best.0,
        best.1
    );
    Ok(FinetuneOutcome {
        model,
        transfer,
        best_epoch: best.1,
        best_val_loss: best.0,
        epochs_run: history.len(),
        history,
    })
}

/// Index of the largest entry of each row; ties go to the lowest index.
pub fn argmax_rows<T: Real>(t: &Tensor<T>) -> Vec<usize> {
    (0..t.rows())
        .map(|r| {
            let row = t.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Fraction of `nodes` whose predicted class equals the label.
pub fn accuracy_on<T: Real>(probs: &Tensor<T>, labels: &[Option<u32>], nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::Usage("accuracy over an empty node set".into()));
    }
    let pred = argmax_rows(probs);
    let mut hits = 0usize;
    for &n in nodes {
        let label = labels
            .get(n)
            .copied()
            .flatten()
            .ok_or_else(|| Error::Data(format!("node {n} has no label")))?;
        hits += usize::from(pred.get(n) == Some(&(label as usize)));
    }
    Ok(hits as f64 / nodes.len() as f64)
}

/// Accuracy on one split with dropout off.
pub fn evaluate_accuracy<T: Real>(model: &GcnModel<T>, g: &Graph, split: SplitKind) -> Result<f64> {
    let nodes = g.split().nodes(split);
    if nodes.is_empty() {
        return Err(Error::Usage(format!("the {split:?} split is empty")));
    }
    let probs = model.predict(&ModelInput::from_graph(g))?;
    accuracy_on(&probs, g.labels(), nodes)
}

/// Train, validation and test accuracy from one forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracies {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

pub fn evaluate_all<T: Real>(model: &GcnModel<T>, g: &Graph) -> Result<Accuracies> {
    let probs = model.predict(&ModelInput::from_graph(g))?;
    let acc = |kind| accuracy_on(&probs, g.labels(), g.split().nodes(kind));
    Ok(Accuracies {
        train: acc(SplitKind::Train)?,
        val: acc(SplitKind::Val)?,
        test: acc(SplitKind::Test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphParts, Split};
    use crate::numeric::SparseMatrix;

    /// Two triangles joined by one edge; class = triangle, features one-hot
    /// per class plus noise-free node id bits.
    pub(crate) fn toy() -> Graph {
        let edges = vec![(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)];
        let mut trip = Vec::new();
        for n in 0..6 {
            trip.push((n, n / 3, 1.0));
            trip.push((n, 2 + n % 3, 1.0));
        }
        Graph::new(GraphParts {
            name: "toy".into(),
            num_nodes: 6,
            num_classes: 2,
            edges,
            features: SparseMatrix::from_triplets(6, 5, trip).unwrap(),
            labels: (0..6).map(|n| Some((n / 3) as u32)).collect(),
            split: Split {
                train: vec![0, 5],
                val: vec![1, 4],
                test: vec![2, 3],
            },
        })
        .unwrap()
    }

    fn quick_pretrain() -> PretrainConfig {
        PretrainConfig {
            max_epochs: 200,
            patience: Some(50),
            ..PretrainConfig::default()
        }
    }

    #[test]
    fn schedule_validation() {
        let mut cfg = FinetuneConfig {
            patience: Some(2000),
            ..FinetuneConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.patience = None;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn pretraining_improves_pretext_loss() {
        let g = toy();
        for ssl in [SslConfig::uniform(crate::ssl::Strategy::Both, 0.0), SslConfig::default()] {
            let cfg = PretrainConfig { ssl, ..quick_pretrain() };
            let out = pretrain::<f64>(&g, &cfg, 1).unwrap();
            assert!(out.best_loss < out.initial_loss);
            assert_eq!(out.history[out.best_epoch], out.best_loss);
            assert!(out.history.iter().all(|&l| l >= out.best_loss));
            assert_eq!(out.snapshot.provenance, Provenance::Pretrained);
        }
    }

    #[test]
    fn pretraining_is_deterministic() {
        let g = toy();
        let a = pretrain::<f32>(&g, &quick_pretrain(), 9).unwrap();
        let b = pretrain::<f32>(&g, &quick_pretrain(), 9).unwrap();
        assert_eq!(a, b);
        let c = pretrain::<f32>(&g, &quick_pretrain(), 10).unwrap();
        assert_ne!(a.snapshot, c.snapshot);
    }

    #[test]
    fn fixed_epoch_mode_and_second_layer_decoding() {
        let g = toy();
        let cfg = PretrainConfig {
            max_epochs: 30,
            patience: None,
            decode_depth: DecodeDepth::Second,
            resample_each_epoch: true,
            ..PretrainConfig::default()
        };
        let out = pretrain::<f64>(&g, &cfg, 2).unwrap();
        assert_eq!(out.epochs_run, 30);
        assert!(out.snapshot.get("theta2").is_some());
        let ft = finetune::<f64>(&g, Some(&out.snapshot), &FinetuneConfig::default(), 2).unwrap();
        assert_eq!(ft.transfer.unwrap().transferred, ["theta1", "theta2"]);
    }

    #[test]
    fn sampled_pretraining_runs() {
        let g = toy();
        let cfg = PretrainConfig {
            link_loss: LinkLossMode::Sampled,
            ..quick_pretrain()
        };
        let out = pretrain::<f64>(&g, &cfg, 3).unwrap();
        assert!(out.sampled_loss);
        assert!(out.best_loss.is_finite());
    }

    #[test]
    fn divergence_is_reported() {
        let g = toy();
        let cfg = PretrainConfig {
            adam: AdamConfig {
                lr: 1e300,
                ..AdamConfig::default()
            },
            ..quick_pretrain()
        };
        assert!(matches!(
            pretrain::<f64>(&g, &cfg, 0),
            Err(Error::Divergence { phase: "pretraining", .. })
        ));
    }

    #[test]
    fn finetuning_fits_toy_graph() {
        let g = toy();
        let cfg = FinetuneConfig {
            model: ModelConfig {
                dropout: 0.0,
                ..ModelConfig::default()
            },
            ..FinetuneConfig::default()
        };
        let out = finetune::<f64>(&g, None, &cfg, 4).unwrap();
        assert_eq!(evaluate_accuracy(&out.model, &g, SplitKind::Train).unwrap(), 1.0);
        // The restored parameters reproduce the tracked best validation loss.
        let input = ModelInput::from_graph(&g);
        let mut tape = Tape::new();
        let p = out.model.classify(&mut tape, &input, &mut Rng::new(0), false).unwrap();
        let l = masked_cross_entropy(&mut tape, p, g.labels(), g.split().nodes(SplitKind::Val)).unwrap();
        assert_eq!(tape.value(l).item().unwrap(), out.best_val_loss);
        assert!(out.epochs_run <= 1000);
    }

    #[test]
    fn random_snapshot_is_the_baseline() {
        let g = toy();
        let cfg = FinetuneConfig::default();
        let snap = WeightSnapshot::random::<f32>(g.num_features(), cfg.model, 12).unwrap();
        let a = finetune::<f32>(&g, None, &cfg, 12).unwrap();
        let b = finetune::<f32>(&g, Some(&snap), &cfg, 12).unwrap();
        assert_eq!(a.model.store().values(), b.model.store().values());
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn argmax_ties_choose_lowest_index() {
        let t = Tensor::from_rows(&[vec![0.5, 0.5], vec![0.2, 0.8], vec![1.0 / 3.0; 3][..2].to_vec()])
            .unwrap();
        assert_eq!(argmax_rows(&t), [0, 1, 0]);
        let labels = [Some(0), Some(1), Some(1)];
        assert_eq!(accuracy_on(&t, &labels, &[0, 1, 2]).unwrap(), 2.0 / 3.0);
        assert!(matches!(accuracy_on(&t, &labels, &[]), Err(Error::Usage(_))));
    }
}
