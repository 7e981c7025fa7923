//! Graph convolutional networks with self-supervised link-prediction
//! pretraining.
//!
//! Two corruptions drive the pretext task: removing a fraction of the edges
//! and covering a fraction of each node's nonzero features. A one-layer GCN
//! encoder is trained to reconstruct the *uncorrupted* adjacency through an
//! inner-product decoder with a positively weighted cross-entropy. Its
//! weights then initialize the first layer of a two-layer GCN classifier
//! that is fine-tuned on the labeled nodes.

pub mod data_io;
pub mod error;
pub mod experiment;
pub mod export;
mod fsutil;
pub mod graph;
pub mod model;
pub mod numeric;
pub mod ssl;
pub mod stats;
pub mod synthetic;
pub mod train;

pub use data_io::{load_dataset, store_dataset, validate_against_reference, DatasetMeta, ReferenceStats};
pub use error::{Error, Result};
pub use experiment::{
    run_experiment, sweep, ExperimentConfig, RunRecord, RunReport, SweepConfig, SweepReport,
};
pub use export::{encoder_from_snapshot, export_embeddings};
pub use fsutil::{atomic_write, write_json};
pub use graph::{normalize_adjacency, Graph, GraphParts, NormalizedAdjacency, Split, SplitKind};
pub use model::{
    transfer_weights, DecodeDepth, GcnModel, ModelConfig, ModelInput, Provenance, WeightSnapshot,
};
pub use numeric::{
    AdamConfig, AdamState, ParamId, ParamStore, Parameter, Real, Rng, SparseMatrix, Tape, Tensor,
    Var,
};
pub use ssl::{build_ssl_input, CoverMode, SslConfig, SslInput, Strategy};
pub use stats::{paired_t_test, TTest};
pub use train::{
    evaluate_accuracy, finetune, pretrain, FinetuneConfig, FinetuneOutcome, LinkLossMode,
    PretrainConfig, PretrainOutcome,
};
