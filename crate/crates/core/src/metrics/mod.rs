//! Quantitative analyses: isosurface similarity, histogram modes, caption
//! corpus statistics and the Mann-Whitney U test.

use thiserror::Error;

mod captions;
mod distance;
mod modes;
mod mwu;
mod similarity;

pub use captions::{
    caption_stability, cosine, keyword_frequency, mean_pairwise_similarity, vocabulary,
    vocabulary_size, CaptionCorpus, CaptionRecord, Embedder, Embedding, TermFrequencyEmbedder,
};
pub use distance::{distance_field, downsample, DistanceField, DEFAULT_DOWNSAMPLE};
pub use modes::{histogram_modes, HistogramMode, DEFAULT_PROMINENCE_FRACTION};
pub use mwu::{mann_whitney_u, UTestMethod, UTestResult, EXACT_MAX_PRODUCT};
pub use similarity::{
    nmi, nmi_of, parse_isovalue_range, similarity_map, similarity_matrix, SimilarityMap,
    DEFAULT_NMI_BINS,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("volume too small after downsampling: {0:?}")]
    DegenerateVolume([usize; 3]),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("need at least 2 captions, got {0}")]
    TooFewCaptions(usize),
    #[error("no (dataset, isovalue) group has 2 or more captions")]
    NoEligibleGroups,
    #[error("empty sample")]
    EmptySample,
    #[error("duplicate caption record {0}")]
    DuplicateRecord(String),
    #[error("embedding failed: {0}")]
    Embedding(String),
}
