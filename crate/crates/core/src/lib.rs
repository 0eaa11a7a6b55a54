//! Embedding-based prompt-injection detection.
//!
//! The pipeline: load labeled prompt corpora ([`ingest`]), embed them
//! ([`embed`]), train binary classifiers over the embeddings ([`learn`]),
//! score them ([`metrics`]) and inspect the embedding space in two dimensions
//! ([`project`]).

pub mod embed;
pub mod error;
pub mod ingest;
pub mod learn;
pub mod metrics;
pub mod project;
pub mod rng;
pub mod types;

pub use error::{Error, ProviderError, Result};
pub use types::{
    validate_corpus, DatasetSplit, EmbeddedDataset, EmbeddingVector, EvalReport, Label, Matrix, ProjectionMethod,
    ProjectionResult, PromptRecord, RecordMeta, Reject, RejectReason, ValidationSummary,
};
