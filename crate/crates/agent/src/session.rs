//! Turns, sessions and the provenance file format.

use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard, TryLockError};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::tool::Artifact;
use crate::AgentError;

pub const PROVENANCE_SCHEMA: &str = "isoscope-provenance";
pub const PROVENANCE_VERSION: u32 = 1;
pub const PROVENANCE_FILE_NAME: &str = "provenance.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub thought: String,
    pub action: String,
    pub action_input: Value,
    pub observation: String,
    #[serde(default)]
    pub artifacts: Vec<Artifact>,
    #[serde(default)]
    pub code_record_id: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTurn {
    pub session_id: String,
    pub index: usize,
    pub user_message: String,
    pub steps: Vec<AgentStep>,
    pub final_answer: String,
    pub followup: Option<String>,
    #[serde(default)]
    pub step_limit_reached: bool,
    /// Set when the turn failed; `final_answer` is empty then.
    #[serde(default)]
    pub error: Option<String>,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
}

impl AgentTurn {
    pub fn artifacts(&self) -> impl Iterator<Item = &Artifact> {
        self.steps.iter().flat_map(|s| s.artifacts.iter())
    }

    pub fn actions(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.action.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
    session_id: String,
    created_at: DateTime<Utc>,
}

/// Append-only conversation state. `dir` holds the session's images,
/// scripts and provenance file.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub dir: PathBuf,
    turns: Vec<AgentTurn>,
}

impl Session {
    pub fn new(id: impl Into<String>, dir: impl Into<PathBuf>, created_at: DateTime<Utc>) -> Self {
        Self {
            id: id.into(),
            created_at,
            dir: dir.into(),
            turns: Vec::new(),
        }
    }

    pub fn turns(&self) -> &[AgentTurn] {
        &self.turns
    }

    pub fn provenance_path(&self) -> PathBuf {
        self.dir.join(PROVENANCE_FILE_NAME)
    }

    /// Appends the turn and rewrites the provenance file. The turn is only
    /// kept in memory once it is on disk.
    pub fn record(&mut self, turn: AgentTurn) -> Result<(), AgentError> {
        if turn.session_id != self.id || turn.index != self.turns.len() {
            return Err(AgentError::BadProvenance(format!(
                "turn {} of session {} does not follow turn {} of {}",
                turn.index,
                turn.session_id,
                self.turns.len(),
                self.id
            )));
        }
        self.turns.push(turn);
        if let Err(e) = self.export(&self.provenance_path()) {
            self.turns.pop();
            return Err(e);
        }
        Ok(())
    }

    /// "User: ...\nAssistant: ..." lines for the last `window` answered turns.
    pub fn memory(&self, window: usize) -> String {
        let answered: Vec<&AgentTurn> = self.turns.iter().filter(|t| t.error.is_none()).collect();
        let start = answered.len().saturating_sub(window);
        answered[start..]
            .iter()
            .map(|t| format!("User: {}\nAssistant: {}", t.user_message, t.final_answer))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn to_jsonl(&self) -> String {
        let header = Header {
            schema: PROVENANCE_SCHEMA.into(),
            version: PROVENANCE_VERSION,
            session_id: self.id.clone(),
            created_at: self.created_at,
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for t in &self.turns {
            out.push_str(&serde_json::to_string(t).expect("turn serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses a provenance export. `dir` is where the session's files live.
    pub fn from_jsonl(text: &str, dir: impl Into<PathBuf>) -> Result<Self, AgentError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let first = lines
            .next()
            .ok_or_else(|| AgentError::BadProvenance("empty file".into()))?;
        let header: Header =
            serde_json::from_str(first).map_err(|e| AgentError::BadProvenance(format!("header: {e}")))?;
        if header.schema != PROVENANCE_SCHEMA || header.version != PROVENANCE_VERSION {
            return Err(AgentError::BadProvenance(format!(
                "unsupported schema {} version {}",
                header.schema, header.version
            )));
        }
        let mut s = Session::new(header.session_id, dir, header.created_at);
        for (i, line) in lines.enumerate() {
            let t: AgentTurn =
                serde_json::from_str(line).map_err(|e| AgentError::BadProvenance(format!("turn {i}: {e}")))?;
            if t.session_id != s.id || t.index != i {
                return Err(AgentError::BadProvenance(format!("turn {i} out of sequence")));
            }
            s.turns.push(t);
        }
        Ok(s)
    }

    /// Writes the export atomically (temp file, then rename).
    pub fn export(&self, path: &Path) -> Result<(), AgentError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("jsonl.tmp");
        std::fs::write(&tmp, self.to_jsonl())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Reads an export; the session directory is the file's directory.
    pub fn import(path: &Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_jsonl(&text, dir)
    }
}

/// A session behind a lock that refuses a second concurrent turn.
#[derive(Debug)]
pub struct SessionHandle {
    inner: Mutex<Session>,
}

impl SessionHandle {
    pub fn new(session: Session) -> Self {
        Self {
            inner: Mutex::new(session),
        }
    }

    /// Exclusive access for one turn; fails fast if a turn is running.
    pub fn begin_turn(&self) -> Result<MutexGuard<'_, Session>, AgentError> {
        match self.inner.try_lock() {
            Ok(g) => Ok(g),
            Err(TryLockError::WouldBlock) => Err(AgentError::TurnInProgress),
            Err(TryLockError::Poisoned(p)) => Ok(p.into_inner()),
        }
    }

    /// Waits for any running turn; for readers such as exports.
    pub fn lock(&self) -> MutexGuard<'_, Session> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }
}
