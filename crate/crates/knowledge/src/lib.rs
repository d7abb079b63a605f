//! Screenshot knowledge base with feature queries, plus a TF-IDF document
//! store for prompt augmentation.

use std::path::PathBuf;

use isoscope_core::metrics::MetricsError;
use isoscope_llm::LlmError;
use thiserror::Error;

pub mod feature;
pub mod kb;
pub mod rag;
pub mod synonyms;

pub use feature::{
    densify, fallback_select, interior_isovalues, rank_candidates, Candidate, FeatureIndex, FeatureIndexConfig,
    FeatureQueryResult, ImprovementReport, KbStats, KnowledgeReport, Selector, SelectorMode,
    DEFAULT_GROWTH_FACTOR, DEFAULT_MAX_ROUNDS,
};
pub use kb::{KnowledgeBase, ScreenshotRecord, FEATURE_INDEX_FILE_NAME};
pub use rag::{
    build_augmented_prompt, chunk_text, DocumentChunk, RagIndex, RagStore, ScoredChunk, CONTEXT_CAP_CHARS,
    DEFAULT_TOP_K, RAG_INDEX_FILE_NAME,
};
pub use synonyms::Synonyms;

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("knowledge base error: {0}")]
    Db(#[from] rusqlite::Error),
    #[error("no screenshots for dataset {0}; run a sweep first")]
    EmptyKnowledgeBase(String),
    #[error("no caption of {dataset} mentions {feature:?}; try expanding the sweep")]
    FeatureNotFound { dataset: String, feature: String },
    #[error("captioner unavailable: {0}")]
    CaptionerUnavailable(LlmError),
    #[error("volume for dataset {0} is not loaded")]
    UnknownVolume(String),
    #[error("unknown camera angle label {0}")]
    UnknownAngle(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("synonym file: {0}")]
    BadSynonyms(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cannot read document {path}: {reason}")]
    UnreadableDocument { path: PathBuf, reason: String },
    #[error("retrieval index is empty")]
    EmptyIndex,
    #[error("corrupt retrieval index: {0}")]
    BadIndex(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
