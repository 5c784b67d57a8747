//! Benchmark construction and evaluation for few-shot crosslingual transfer.
//!
//! The crate covers the full experiment lifecycle:
//!
//! * [`corpus`] — parsing and validation of classification TSV and CoNLL-style
//!   sequence-labeling data, label sets, vocabularies, dataset manifests.
//! * [`sampler`] — N-way K-shot bucket construction: disjoint stratified
//!   sampling for classification, minimum-including sampling for sequence
//!   labeling, dev-split carving, and bucket verification.
//! * [`metrics`] — accuracy, chunk-level entity F1, token-level F1, and
//!   confusion matrices.
//! * [`stats`] — per-bucket run aggregation (mean ± std, max differences,
//!   histograms), gains over zero-shot, Spearman/Pearson correlations, and
//!   the results CSV schema.
//! * [`analysis`] — lexical overlap, WALS feature commonality, improved
//!   prediction sets, Jaccard overlap matrices, in-bucket presence splits,
//!   and attention-delta tables from externally produced dumps.
//! * [`adapt`] — a desk-scale trainable model implementing the two-stage
//!   source-training / target-adapting pipeline with full-model finetuning
//!   and the frozen-encoder head variants (FC, FC+pooler, COS+pooler,
//!   reset FC+pooler), Adam, learning-rate search, and early stopping.
//! * [`synth`] — deterministic synthetic task generators used by the test
//!   suites and for end-to-end demos without licensed corpora.

pub mod adapt;
pub mod analysis;
pub mod corpus;
pub mod metrics;
pub mod sampler;
pub mod seed;
pub mod stats;
pub mod synth;

pub use corpus::{ClsExample, Dataset, LabelKind, LabelSet, Sentence};
pub use sampler::{Bucket, BucketItem, BucketKind, SamplingConfig};
pub use stats::{AggregateReport, RunResult};
