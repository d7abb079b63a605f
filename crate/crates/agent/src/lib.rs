//! Single tool-using agent: registry, action parsing, turn loop, sessions
//! and provenance.

use thiserror::Error;

mod agent;
pub mod parse;
mod session;
mod tool;
pub mod tools;

pub use agent::{Agent, AgentConfig, TraceEvent, TraceKind, DEFAULT_MAX_STEPS, DEFAULT_MEMORY_WINDOW, STEP_LIMIT_MARKER};
pub use parse::{parse_completion, Parsed};
pub use session::{
    AgentStep, AgentTurn, Session, SessionHandle, PROVENANCE_FILE_NAME, PROVENANCE_SCHEMA, PROVENANCE_VERSION,
};
pub use tool::{
    normalize_input, Artifact, ArtifactKind, FieldSpec, Services, Tool, ToolEnv, ToolKind, ToolOutput, ToolRegistry,
    ToolSpec, VolumeCache, DYNAMIC_TOOL_PREFIX,
};
pub use tools::{builtin_tools, core_tools, default_registry, DynamicCodeTool};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("duplicate tool name {0:?}")]
    DuplicateToolName(String),
    #[error("tool {0:?} needs a non-empty name and description")]
    InvalidToolSpec(String),
    #[error("record #{id} is in state {state} and cannot become a tool")]
    NotPromotable { id: i64, state: u8 },
    #[error("unknown tool {0:?}")]
    UnknownToolRequested(String),
    #[error("could not parse an action or final answer from: {0:?}")]
    MalformedActionParse(String),
    #[error("a turn is already running in this session")]
    TurnInProgress,
    #[error("bad tool input: {0}")]
    BadToolInput(String),
    #[error("{0}")]
    Tool(String),
    #[error(transparent)]
    Codegen(#[from] isoscope_codegen::CodegenError),
    #[error(transparent)]
    Llm(#[from] isoscope_llm::LlmError),
    #[error("bad provenance file: {0}")]
    BadProvenance(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
