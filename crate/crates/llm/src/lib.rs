//! Role-based access to language and vision models, with scripted,
//! recording and replaying backends for deterministic runs.

use thiserror::Error;

pub mod backend;
pub mod caption;
mod config;
mod gateway;
mod http;
pub mod transcript;

pub use backend::{
    Completion, CompletionBackend, CompletionRequest, FnBackend, RecordingBackend, ReplayBackend,
    ScriptedBackend, UnavailableBackend,
};
pub use caption::{Captioner, FeatureBand, SyntheticCaptioner, EMPTY_SURFACE_CAPTION};
pub use config::{GatewayConfig, Role, RoleConfig};
pub use gateway::{parse_score, Gateway, VISION_PROMPT};
pub use http::HttpChatBackend;
pub use transcript::{canonical_prompt, prompt_hash, Transcript, TranscriptEntry};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("replay transcript exhausted at entry {index}")]
    ReplayExhausted { index: usize },
    #[error("replay mismatch at entry {index}: transcript has {expected}, call was {got}")]
    ReplayPromptMismatch {
        index: usize,
        expected: String,
        got: String,
    },
    #[error("judge reply has no score in [0, 100]: {0:?}")]
    UnparseableJudgment(String),
    #[error("bad gateway config: {0}")]
    BadConfig(String),
    #[error("bad transcript: {0}")]
    Transcript(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl LlmError {
    /// Errors that mean "no model answered", as opposed to a bad answer.
    pub fn is_unavailable(&self) -> bool {
        matches!(
            self,
            LlmError::BackendUnavailable(_)
                | LlmError::ReplayExhausted { .. }
                | LlmError::ReplayPromptMismatch { .. }
        )
    }
}
