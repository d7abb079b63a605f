//! The screenshot knowledge base: one row per (dataset, isovalue, angle).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, SecondsFormat, Utc};
use rusqlite::{params, Connection, Row};
use serde::{Deserialize, Serialize};

use crate::KnowledgeError;

pub const FEATURE_INDEX_FILE_NAME: &str = "feature_index.db";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenshotRecord {
    pub dataset: String,
    pub isovalue: f64,
    pub angle: String,
    pub image_path: PathBuf,
    pub caption: String,
    pub keywords: BTreeSet<String>,
    pub created_at: DateTime<Utc>,
}

pub struct KnowledgeBase {
    conn: Mutex<Connection>,
}

const COLUMNS: &str = "dataset, isovalue, angle, image_path, caption, keywords_json, created_at";

fn from_row(r: &Row<'_>) -> rusqlite::Result<ScreenshotRecord> {
    let kw: String = r.get(5)?;
    let ts: String = r.get(6)?;
    let bad = |i: usize, e: Box<dyn std::error::Error + Send + Sync>| {
        rusqlite::Error::FromSqlConversionFailure(i, rusqlite::types::Type::Text, e)
    };
    Ok(ScreenshotRecord {
        dataset: r.get(0)?,
        isovalue: r.get(1)?,
        angle: r.get(2)?,
        image_path: PathBuf::from(r.get::<_, String>(3)?),
        caption: r.get(4)?,
        keywords: serde_json::from_str(&kw).map_err(|e| bad(5, Box::new(e)))?,
        created_at: DateTime::parse_from_rfc3339(&ts)
            .map_err(|e| bad(6, Box::new(e)))?
            .with_timezone(&Utc),
    })
}

impl KnowledgeBase {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, KnowledgeError> {
        Self::init(Connection::open(path.as_ref())?)
    }

    pub fn open_in_memory() -> Result<Self, KnowledgeError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self, KnowledgeError> {
        conn.execute_batch(
            "CREATE TABLE IF NOT EXISTS screenshots (
                dataset TEXT NOT NULL,
                isovalue REAL NOT NULL,
                angle TEXT NOT NULL,
                image_path TEXT NOT NULL,
                caption TEXT NOT NULL,
                keywords_json TEXT NOT NULL,
                created_at TEXT NOT NULL,
                UNIQUE (dataset, isovalue, angle)
            );",
        )?;
        Ok(Self {
            conn: Mutex::new(conn),
        })
    }

    /// Inserts all records in one transaction; rows that already exist are
    /// left alone. Returns the number of rows added.
    pub fn insert_batch(&self, records: &[ScreenshotRecord]) -> Result<usize, KnowledgeError> {
        let mut conn = self.conn.lock().unwrap();
        let tx = conn.transaction()?;
        let mut added = 0;
        {
            let mut stmt = tx.prepare(&format!(
                "INSERT OR IGNORE INTO screenshots ({COLUMNS}) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)"
            ))?;
            for r in records {
                added += stmt.execute(params![
                    r.dataset,
                    r.isovalue,
                    r.angle,
                    r.image_path.to_string_lossy(),
                    r.caption,
                    serde_json::to_string(&r.keywords).expect("string set serializes"),
                    r.created_at.to_rfc3339_opts(SecondsFormat::Millis, true),
                ])?;
            }
        }
        tx.commit()?;
        Ok(added)
    }

    /// Records for one dataset ordered by (isovalue, angle).
    pub fn records(&self, dataset: &str) -> Result<Vec<ScreenshotRecord>, KnowledgeError> {
        let conn = self.conn.lock().unwrap();
        let mut stmt = conn.prepare(&format!(
            "SELECT {COLUMNS} FROM screenshots WHERE dataset = ?1 ORDER BY isovalue ASC, angle ASC"
        ))?;
        let rows = stmt.query_map([dataset], from_row)?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    pub fn count(&self, dataset: &str) -> Result<usize, KnowledgeError> {
        let n: i64 = self.conn.lock().unwrap().query_row(
            "SELECT COUNT(*) FROM screenshots WHERE dataset = ?1",
            [dataset],
            |r| r.get(0),
        )?;
        Ok(n as usize)
    }

    pub fn contains(&self, dataset: &str, isovalue: f64, angle: &str) -> Result<bool, KnowledgeError> {
        let n: i64 = self.conn.lock().unwrap().query_row(
            "SELECT COUNT(*) FROM screenshots WHERE dataset = ?1 AND isovalue = ?2 AND angle = ?3",
            params![dataset, isovalue, angle],
            |r| r.get(0),
        )?;
        Ok(n > 0)
    }

    /// Distinct isovalues for a dataset, ascending.
    pub fn isovalues(&self, dataset: &str) -> Result<Vec<f64>, KnowledgeError> {
        let conn = self.conn.lock().unwrap();
        let mut stmt =
            conn.prepare("SELECT DISTINCT isovalue FROM screenshots WHERE dataset = ?1 ORDER BY isovalue ASC")?;
        let rows = stmt.query_map([dataset], |r| r.get(0))?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    /// Distinct angle labels for a dataset, sorted.
    pub fn angles(&self, dataset: &str) -> Result<Vec<String>, KnowledgeError> {
        let conn = self.conn.lock().unwrap();
        let mut stmt =
            conn.prepare("SELECT DISTINCT angle FROM screenshots WHERE dataset = ?1 ORDER BY angle ASC")?;
        let rows = stmt.query_map([dataset], |r| r.get(0))?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    pub fn datasets(&self) -> Result<Vec<String>, KnowledgeError> {
        let conn = self.conn.lock().unwrap();
        let mut stmt = conn.prepare("SELECT DISTINCT dataset FROM screenshots ORDER BY dataset ASC")?;
        let rows = stmt.query_map([], |r| r.get(0))?;
        Ok(rows.collect::<Result<_, _>>()?)
    }
}
