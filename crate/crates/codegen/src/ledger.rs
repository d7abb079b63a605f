//! Persistent log of generated scripts and their validation state.

use std::collections::HashSet;
use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, SecondsFormat, Utc};
use isoscope_core::clock::SharedClock;
use rusqlite::{params, Connection, OptionalExtension, Row};
use serde::{Deserialize, Serialize};

use crate::CodegenError;

pub const LEDGER_FILE_NAME: &str = "code_generation_log.db";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum CodeState {
    NotValidated = 0,
    Clean = 1,
    ErrorsUnfixed = 2,
    ErrorsFixed = 3,
}

impl CodeState {
    pub fn is_servable(self) -> bool {
        matches!(self, CodeState::Clean | CodeState::ErrorsFixed)
    }
}

impl From<CodeState> for u8 {
    fn from(s: CodeState) -> u8 {
        s as u8
    }
}

impl TryFrom<u8> for CodeState {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(CodeState::NotValidated),
            1 => Ok(CodeState::Clean),
            2 => Ok(CodeState::ErrorsUnfixed),
            3 => Ok(CodeState::ErrorsFixed),
            other => Err(format!("invalid code state {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeRecord {
    pub id: i64,
    pub prompt: String,
    pub dataset_path: String,
    pub code: String,
    pub viz_type: String,
    pub state: CodeState,
    pub iterations_used: u32,
    pub stdout: String,
    pub stderr: String,
    pub created_at: DateTime<Utc>,
    pub validated_at: Option<DateTime<Utc>>,
    pub parent_id: Option<i64>,
}

#[derive(Debug, Clone)]
pub struct NewRecord<'a> {
    pub prompt: &'a str,
    pub dataset_path: &'a str,
    pub code: &'a str,
    pub viz_type: &'a str,
    pub parent_id: Option<i64>,
}

/// Cache key form of a prompt: lowercase, whitespace collapsed, trailing
/// punctuation stripped.
pub fn canonical_prompt(prompt: &str) -> String {
    let lower = prompt.to_lowercase();
    let collapsed = lower.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_string()
}

fn ts(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn parse_ts(s: &str) -> rusqlite::Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| rusqlite::Error::FromSqlConversionFailure(0, rusqlite::types::Type::Text, Box::new(e)))
}

const COLUMNS: &str = "id, prompt, dataset_path, code, viz_type, state, iterations_used, stdout, stderr, created_at, validated_at, parent_id";

fn from_row(row: &Row<'_>) -> rusqlite::Result<CodeRecord> {
    let state: u8 = row.get(5)?;
    let validated: Option<String> = row.get(10)?;
    Ok(CodeRecord {
        id: row.get(0)?,
        prompt: row.get(1)?,
        dataset_path: row.get(2)?,
        code: row.get(3)?,
        viz_type: row.get(4)?,
        state: CodeState::try_from(state).map_err(|e| {
            rusqlite::Error::FromSqlConversionFailure(5, rusqlite::types::Type::Integer, e.into())
        })?,
        iterations_used: row.get(6)?,
        stdout: row.get(7)?,
        stderr: row.get(8)?,
        created_at: parse_ts(&row.get::<_, String>(9)?)?,
        validated_at: validated.as_deref().map(parse_ts).transpose()?,
        parent_id: row.get(11)?,
    })
}

/// SQLite-backed ledger. All writes go through one connection behind a
/// mutex, which serializes them.
pub struct CodeLedger {
    conn: Mutex<Connection>,
    clock: SharedClock,
    claimed: Mutex<HashSet<i64>>,
}

impl CodeLedger {
    pub fn open(path: impl AsRef<Path>, clock: SharedClock) -> Result<Self, CodegenError> {
        Self::init(Connection::open(path.as_ref())?, clock)
    }

    pub fn open_in_memory(clock: SharedClock) -> Result<Self, CodegenError> {
        Self::init(Connection::open_in_memory()?, clock)
    }

    fn init(conn: Connection, clock: SharedClock) -> Result<Self, CodegenError> {
        conn.execute_batch(
            "CREATE TABLE IF NOT EXISTS code_log (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                prompt TEXT NOT NULL,
                dataset_path TEXT NOT NULL,
                code TEXT NOT NULL,
                viz_type TEXT NOT NULL,
                state INTEGER NOT NULL DEFAULT 0 CHECK (state IN (0, 1, 2, 3)),
                iterations_used INTEGER NOT NULL DEFAULT 0,
                stdout TEXT NOT NULL DEFAULT '',
                stderr TEXT NOT NULL DEFAULT '',
                created_at TEXT NOT NULL,
                validated_at TEXT,
                parent_id INTEGER REFERENCES code_log(id)
            );",
        )?;
        Ok(Self {
            conn: Mutex::new(conn),
            clock,
            claimed: Mutex::new(HashSet::new()),
        })
    }

    pub fn insert(&self, rec: NewRecord<'_>) -> Result<CodeRecord, CodegenError> {
        let now = self.clock.now();
        let id = {
            let conn = self.conn.lock().unwrap();
            conn.execute(
                "INSERT INTO code_log (prompt, dataset_path, code, viz_type, state, created_at, parent_id)
                 VALUES (?1, ?2, ?3, ?4, 0, ?5, ?6)",
                params![
                    rec.prompt,
                    rec.dataset_path,
                    rec.code,
                    rec.viz_type,
                    ts(now),
                    rec.parent_id
                ],
            )?;
            conn.last_insert_rowid()
        };
        self.get(id)
    }

    pub fn get(&self, id: i64) -> Result<CodeRecord, CodegenError> {
        self.conn
            .lock()
            .unwrap()
            .query_row(&format!("SELECT {COLUMNS} FROM code_log WHERE id = ?1"), [id], from_row)
            .optional()?
            .ok_or(CodegenError::RecordNotFound(id))
    }

    /// Newest record in state 1 or 3 whose canonical prompt and dataset path
    /// match.
    pub fn lookup_cached(&self, prompt: &str, dataset_path: &str) -> Result<Option<CodeRecord>, CodegenError> {
        let key = canonical_prompt(prompt);
        let conn = self.conn.lock().unwrap();
        let mut stmt = conn.prepare(&format!(
            "SELECT {COLUMNS} FROM code_log
             WHERE dataset_path = ?1 AND state IN (1, 3)
             ORDER BY created_at DESC, id DESC"
        ))?;
        let mut rows = stmt.query_map([dataset_path], from_row)?;
        rows.find_map(|r| match r {
            Ok(rec) if canonical_prompt(&rec.prompt) == key => Some(Ok(rec)),
            Ok(_) => None,
            Err(e) => Some(Err(e)),
        })
        .transpose()
        .map_err(Into::into)
    }

    /// Most recent record whose code equals `code` exactly.
    pub fn find_by_code(&self, code: &str) -> Result<Option<CodeRecord>, CodegenError> {
        Ok(self
            .conn
            .lock()
            .unwrap()
            .query_row(
                &format!("SELECT {COLUMNS} FROM code_log WHERE code = ?1 ORDER BY id DESC LIMIT 1"),
                [code],
                from_row,
            )
            .optional()?)
    }

    /// State-0 records, oldest first.
    pub fn pending(&self) -> Result<Vec<CodeRecord>, CodegenError> {
        self.query(&format!(
            "SELECT {COLUMNS} FROM code_log WHERE state = 0 ORDER BY created_at ASC, id ASC"
        ))
    }

    pub fn servable(&self) -> Result<Vec<CodeRecord>, CodegenError> {
        self.query(&format!(
            "SELECT {COLUMNS} FROM code_log WHERE state IN (1, 3) ORDER BY id ASC"
        ))
    }

    pub fn all(&self) -> Result<Vec<CodeRecord>, CodegenError> {
        self.query(&format!("SELECT {COLUMNS} FROM code_log ORDER BY id ASC"))
    }

    fn query(&self, sql: &str) -> Result<Vec<CodeRecord>, CodegenError> {
        let conn = self.conn.lock().unwrap();
        let mut stmt = conn.prepare(sql)?;
        let rows = stmt.query_map([], from_row)?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    /// Writes the outcome of validation in one statement. Only state-0
    /// records may be finalized and the target state must not be 0.
    pub fn finalize(
        &self,
        id: i64,
        code: &str,
        state: CodeState,
        iterations_used: u32,
        stdout: &str,
        stderr: &str,
    ) -> Result<CodeRecord, CodegenError> {
        if state == CodeState::NotValidated {
            return Err(CodegenError::InvalidTransition { id, to: state });
        }
        let now = self.clock.now();
        let changed = self.conn.lock().unwrap().execute(
            "UPDATE code_log SET code = ?2, state = ?3, iterations_used = ?4, stdout = ?5, stderr = ?6, validated_at = ?7
             WHERE id = ?1 AND state = 0",
            params![id, code, state as u8, iterations_used, stdout, stderr, ts(now)],
        )?;
        if changed == 0 {
            self.get(id)?;
            return Err(CodegenError::InvalidTransition { id, to: state });
        }
        self.get(id)
    }

    /// Marks a record as under validation. Returns false if already claimed.
    pub fn claim(&self, id: i64) -> bool {
        self.claimed.lock().unwrap().insert(id)
    }

    pub fn release(&self, id: i64) {
        self.claimed.lock().unwrap().remove(&id);
    }

    pub fn is_claimed(&self, id: i64) -> bool {
        self.claimed.lock().unwrap().contains(&id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use isoscope_core::clock::LogicalClock;
    use std::sync::Arc;

    fn ledger() -> CodeLedger {
        CodeLedger::open_in_memory(Arc::new(LogicalClock::default())).unwrap()
    }

    fn new<'a>(prompt: &'a str, code: &'a str) -> NewRecord<'a> {
        NewRecord {
            prompt,
            dataset_path: "all_data/headsq.vti",
            code,
            viz_type: "volume",
            parent_id: None,
        }
    }

    #[test]
    fn canonical_forms() {
        assert_eq!(canonical_prompt("  Volume   Rendering!! "), "volume rendering");
        assert_eq!(canonical_prompt("a\tb."), "a b");
    }

    #[test]
    fn cache_rules() {
        let l = ledger();
        assert!(l.lookup_cached("x", "all_data/headsq.vti").unwrap().is_none());
        let a = l.insert(new("Volume rendering", "a")).unwrap();
        assert!(l.lookup_cached("volume rendering", "all_data/headsq.vti").unwrap().is_none());
        l.finalize(a.id, "a", CodeState::Clean, 0, "", "").unwrap();
        let b = l.insert(new("volume  rendering.", "b")).unwrap();
        l.finalize(b.id, "b", CodeState::ErrorsFixed, 1, "", "").unwrap();
        let c = l.insert(new("volume rendering", "c")).unwrap();
        l.finalize(c.id, "c", CodeState::ErrorsUnfixed, 3, "", "").unwrap();
        let hit = l.lookup_cached("VOLUME RENDERING", "all_data/headsq.vti").unwrap().unwrap();
        assert_eq!(hit.id, b.id);
        assert!(l.lookup_cached("volume rendering", "other.vti").unwrap().is_none());
    }

    #[test]
    fn no_return_to_state_zero() {
        let l = ledger();
        let a = l.insert(new("p", "a")).unwrap();
        assert!(l.finalize(a.id, "a", CodeState::NotValidated, 0, "", "").is_err());
        let done = l.finalize(a.id, "a", CodeState::Clean, 0, "", "").unwrap();
        assert!(done.validated_at.unwrap() >= done.created_at);
        assert!(matches!(
            l.finalize(a.id, "a", CodeState::ErrorsUnfixed, 0, "", ""),
            Err(CodegenError::InvalidTransition { .. })
        ));
        assert!(matches!(l.get(99), Err(CodegenError::RecordNotFound(99))));
    }

    #[test]
    fn pending_oldest_first() {
        let l = ledger();
        let a = l.insert(new("p1", "a")).unwrap();
        let b = l.insert(new("p2", "b")).unwrap();
        let ids: Vec<i64> = l.pending().unwrap().iter().map(|r| r.id).collect();
        assert_eq!(ids, vec![a.id, b.id]);
    }
}
