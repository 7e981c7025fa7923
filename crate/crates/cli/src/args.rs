use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Parser, Debug)]
#[command(
    name = "gcnssl",
    version,
    about = "GCN node classification with self-supervised link-prediction pretraining"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Pretrain the encoder on the link-reconstruction task and save its weights.
    Pretrain(PretrainCmd),
    /// Train the classifier, from scratch or from a weight snapshot.
    Train(TrainCmd),
    /// Repeat pretraining (optional) and training over seeds; report mean, std and the paired t-test.
    Experiment(ExperimentCmd),
    /// Baseline plus every strategy × percentage cell.
    Sweep(SweepCmd),
    /// Write hidden representations of every node as TSV.
    Export(ExportCmd),
    /// Compare a dataset directory with the published citation-graph statistics.
    Validate(ValidateCmd),
    /// Write a synthetic dataset directory.
    Synthesize(SynthesizeCmd),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyArg {
    Rrl,
    Rcf,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthArg {
    First,
    Second,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkLossArg {
    Auto,
    Full,
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverModeArg {
    Nonzero,
    AllEntries,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Small,
    CoraSized,
}

/// Dataset, seed and config file, shared by every command that loads a graph.
#[derive(Args, Debug, Clone, Default)]
pub struct DataArgs {
    /// Dataset directory, or a dataset name under the data root.
    #[arg(long)]
    pub data: Option<String>,
    /// Directory holding dataset directories.
    #[arg(long, env = "GCNSSL_DATA")]
    pub data_root: Option<PathBuf>,
    /// JSON file whose keys match the long flag names; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub dtype: Option<Dtype>,
}

/// Settings of the shared GCN layers.
#[derive(Args, Debug, Clone, Default)]
pub struct ModelArgs {
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Apply weight decay to every parameter instead of the first layer only.
    #[arg(long)]
    pub decay_all: bool,
    /// Add bias terms to both layers.
    #[arg(long)]
    pub bias: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct PretrainArgs {
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// Fraction of edges removed, in [0, 1].
    #[arg(long)]
    pub remove: Option<f64>,
    /// Fraction of each node's features covered, in [0, 1].
    #[arg(long)]
    pub cover: Option<f64>,
    #[arg(long, value_enum)]
    pub cover_mode: Option<CoverModeArg>,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub pretrain_patience: Option<usize>,
    /// Pretrain for exactly --pretrain-epochs epochs.
    #[arg(long)]
    pub fixed_epochs: bool,
    #[arg(long, value_enum)]
    pub decode_depth: Option<DepthArg>,
    #[arg(long, value_enum)]
    pub link_loss: Option<LinkLossArg>,
    #[arg(long)]
    pub neg_per_pos: Option<usize>,
    /// Draw a new corruption every pretraining epoch.
    #[arg(long)]
    pub resample: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    #[arg(long)]
    pub runs: Option<usize>,
    /// Concurrent runs; 1 keeps everything on one thread.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PretrainCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub pretrain: PretrainArgs,
    /// Snapshot file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional JSON file with the per-epoch pretext loss.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub finetune: FinetuneArgs,
    /// Weight snapshot for the first layer; omit for the baseline.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Directory for model.json and metrics.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExperimentCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub pretrain: PretrainArgs,
    #[command(flatten)]
    pub finetune: FinetuneArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Report of a same-seed baseline experiment for the paired t-test.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Report file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub pretrain: PretrainArgs,
    #[command(flatten)]
    pub finetune: FinetuneArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated fractions, default 0.1,0.2,0.3,0.4,0.5,0.6.
    #[arg(long, value_delimiter = ',')]
    pub percentages: Option<Vec<f64>>,
    /// Comma-separated strategies, default rrl,rcf,both.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub strategies: Option<Vec<StrategyArg>>,
    /// JSON report to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Text table to write; defaults to the report path with a .txt extension.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExportCmd {
    #[command(flatten)]
    pub data: DataArgs,
    /// Pretrained or trained weight snapshot.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    /// TSV file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateCmd {
    #[command(flatten)]
    pub data: DataArgs,
    /// Reference statistics (cora, citeseer or pubmed); defaults to the dataset name.
    #[arg(long)]
    pub reference: Option<String>,
}

#[derive(Args, Debug)]
pub struct SynthesizeCmd {
    #[arg(long, value_enum, default_value = "small")]
    pub preset: Preset,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset directory to write.
    #[arg(long)]
    pub out: PathBuf,
}
