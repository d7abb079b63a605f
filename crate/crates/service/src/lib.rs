//! HTTP service, CLI plumbing and the generation benchmark.

pub mod app;
pub mod bench;
pub mod config;
pub mod http;

pub use app::{valid_session_id, App, ChatResponse, DatasetInfo, ImageRef, Scheduler, TraceRecord, ValidationReport};
pub use bench::{run_benchmark, BenchRow, BenchTask, RunOutcome, DEFAULT_BENCH_RUNS};
pub use config::{CaptionerKind, ServiceConfig};
pub use http::router;

use isoscope_agent::AgentError;
use isoscope_codegen::CodegenError;
use isoscope_knowledge::KnowledgeError;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("configuration: {0}")]
    BadConfig(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("missing or wrong bearer token")]
    Unauthorized,
    #[error("model backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error(transparent)]
    Agent(AgentError),
    #[error(transparent)]
    Codegen(CodegenError),
    #[error(transparent)]
    Knowledge(KnowledgeError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<CodegenError> for ServiceError {
    fn from(e: CodegenError) -> Self {
        match e {
            CodegenError::RecordNotFound(id) => Self::NotFound(format!("code record {id}")),
            CodegenError::RecordBusy(_) | CodegenError::NotPending { .. } => Self::Conflict(e.to_string()),
            CodegenError::EmptyModification | CodegenError::MissingSourceFile(_) => Self::BadRequest(e.to_string()),
            e if e.is_backend_unavailable() => Self::BackendUnavailable(e.to_string()),
            e => Self::Codegen(e),
        }
    }
}

impl From<KnowledgeError> for ServiceError {
    fn from(e: KnowledgeError) -> Self {
        match e {
            KnowledgeError::EmptyKnowledgeBase(_)
            | KnowledgeError::FeatureNotFound { .. }
            | KnowledgeError::UnknownVolume(_) => Self::NotFound(e.to_string()),
            KnowledgeError::UnknownAngle(_) | KnowledgeError::InvalidParameter(_) => Self::BadRequest(e.to_string()),
            KnowledgeError::CaptionerUnavailable(ref l) if l.is_unavailable() => Self::BackendUnavailable(e.to_string()),
            e => Self::Knowledge(e),
        }
    }
}

impl From<AgentError> for ServiceError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::TurnInProgress => Self::Conflict(e.to_string()),
            AgentError::Codegen(c) => c.into(),
            AgentError::Llm(ref l) if l.is_unavailable() => Self::BackendUnavailable(e.to_string()),
            AgentError::BadProvenance(_) => Self::BadRequest(e.to_string()),
            e => Self::Agent(e),
        }
    }
}
