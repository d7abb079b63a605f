use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{LlmError, Role};

/// Whitespace runs collapse to one space; leading/trailing whitespace dropped.
pub fn canonical_prompt(prompt: &str) -> String {
    prompt.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(canonical_prompt(prompt).as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: Role,
    pub prompt_hash: String,
    pub prompt_text: String,
    pub response_text: String,
    pub latency_ms: f64,
}

impl TranscriptEntry {
    pub fn new(role: Role, prompt: &str, response: &str, latency_ms: f64) -> Self {
        Self {
            role,
            prompt_hash: prompt_hash(prompt),
            prompt_text: prompt.to_string(),
            response_text: response.to_string(),
            latency_ms,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("transcript entry serializes")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    /// One JSON object per line; blank lines ignored.
    pub fn parse_jsonl(text: &str) -> Result<Self, LlmError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: TranscriptEntry = serde_json::from_str(line)
                .map_err(|err| LlmError::Transcript(format!("line {}: {err}", i + 1)))?;
            entries.push(e);
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Transcript(format!("{}: {e}", path.display())))?;
        Self::parse_jsonl(&text)
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&e.to_json_line());
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LlmError> {
        let mut f = std::fs::File::create(path.as_ref())?;
        f.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
