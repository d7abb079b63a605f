//! Cache-first script generation with a validation ledger, a static
//! security scan and sandboxed execution.

use std::path::PathBuf;

use isoscope_llm::LlmError;
use thiserror::Error;

pub mod ledger;
pub mod pipeline;
pub mod sandbox;
pub mod scan;

pub use ledger::{canonical_prompt, CodeLedger, CodeRecord, CodeState, NewRecord, LEDGER_FILE_NAME};
pub use pipeline::{
    extract_code_block, generation_prompt, infer_viz_type, CodegenPipeline, GeneratedCode,
    PendingSummary, DEFAULT_MAX_FIX_ITERATIONS, DEFAULT_REQUIREMENTS, OVERRIDE_PREAMBLE,
};
pub use sandbox::{ExecutionResult, Sandbox, SandboxConfig, DEFAULT_TIMEOUT, SCRIPT_FILE_NAME};
pub use scan::{security_scan, Finding, ScanVerdict, Severity};

#[derive(Debug, Error)]
pub enum CodegenError {
    #[error("ledger error: {0}")]
    Ledger(#[from] rusqlite::Error),
    #[error("code record {0} not found")]
    RecordNotFound(i64),
    #[error("code record {0} is being validated")]
    RecordBusy(i64),
    #[error("code record {id} is in state {state:?}, not pending")]
    NotPending { id: i64, state: CodeState },
    #[error("code record {id} cannot move to {to:?}")]
    InvalidTransition { id: i64, to: CodeState },
    #[error("model reply contained no fenced code block")]
    NoCodeBlockInResponse,
    #[error("source file missing: {0}")]
    MissingSourceFile(PathBuf),
    #[error("modification request is empty")]
    EmptyModification,
    #[error("blocked by security scan: {}", .0.summary())]
    ScanBlocked(ScanVerdict),
    #[error("sandbox failure: {0}")]
    Sandbox(String),
    #[error(transparent)]
    Llm(LlmError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CodegenError {
    pub fn is_backend_unavailable(&self) -> bool {
        matches!(self, CodegenError::Llm(e) if e.is_unavailable())
    }
}
