//! Desk-scale realization of the two-stage transfer pipeline: source
//! training on abundant source-language data, then target adaptation on a
//! single bucket with dev-based early stopping.
//!
//! The model is deliberately small — a fixed hashed bag-of-tokens
//! featurizer, one tanh encoder layer standing in for a frozen or
//! unfrozen encoder body, a tanh pooler, and either a fully-connected or
//! a cosine classifier head. Everything is f64 with analytic gradients,
//! so training is bit-reproducible and finite-difference checkable.

mod model;
mod optim;
mod train;

pub use model::{
    cos_logits, featurize, forward, AdaptVariant, Forward, Head, ModelConfig, ToyModel,
};
pub use optim::{adam_step, AdamParams, AdamState};
pub use optim::Grads;
pub use train::{
    config_hash, evaluate, featurize_examples, load_checkpoint, loss_and_grads,
    prepare_for_variant, save_checkpoint, source_train, target_adapt, target_adapt_search,
    EarlyStopper, FeaturizedSet, SourceOutcome, TrainConfig, CHECKPOINT_VERSION,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdaptError {
    #[error("batch must be non-empty")]
    EmptyBatch,
    #[error("bucket must be non-empty")]
    EmptyBucket,
    #[error("evaluation set must be non-empty")]
    EmptyDev,
    #[error("label index {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("target adaptation runs on classification buckets only")]
    NotClassification,
    #[error("cosine head: {what} has (near-)zero norm")]
    ZeroNorm { what: &'static str },
    #[error("training diverged: non-finite loss; first non-finite tensor: {tensor}")]
    Divergence { tensor: &'static str },
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("checkpoint version {found} unsupported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("checkpoint config hash {found} does not match expected {expected}")]
    CheckpointHash { found: String, expected: String },
    #[error("checkpoint: {0}")]
    CheckpointFormat(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AdaptError>;
