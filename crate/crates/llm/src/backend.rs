use std::collections::{BTreeMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};

use crate::transcript::{prompt_hash, Transcript, TranscriptEntry};
use crate::{LlmError, Role, RoleConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub role: Role,
    pub config: &'a RoleConfig,
    pub prompt: &'a str,
    /// PNG bytes for vision calls.
    pub image_png: Option<&'a [u8]>,
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, LlmError>;
}

/// Always fails with `BackendUnavailable`.
#[derive(Debug, Default)]
pub struct UnavailableBackend;

impl CompletionBackend for UnavailableBackend {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, LlmError> {
        Err(LlmError::BackendUnavailable(format!(
            "no backend configured for role {}",
            req.role
        )))
    }
}

/// Per-role FIFO of canned replies. A role with an empty queue falls back to
/// the shared queue; when both are empty the call fails as unavailable.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    queues: Mutex<BTreeMap<Role, VecDeque<String>>>,
    shared: Mutex<VecDeque<String>>,
    calls: Mutex<Vec<(Role, String)>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, role: Role, reply: impl Into<String>) -> &Self {
        self.queues
            .lock()
            .unwrap()
            .entry(role)
            .or_default()
            .push_back(reply.into());
        self
    }

    pub fn push_any(&self, reply: impl Into<String>) -> &Self {
        self.shared.lock().unwrap().push_back(reply.into());
        self
    }

    pub fn with<I, S>(self, role: Role, replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        for r in replies {
            self.push(role, r);
        }
        self
    }

    /// Every (role, prompt) received so far, in order.
    pub fn calls(&self) -> Vec<(Role, String)> {
        self.calls.lock().unwrap().clone()
    }

    pub fn call_count(&self, role: Role) -> usize {
        self.calls.lock().unwrap().iter().filter(|(r, _)| *r == role).count()
    }

    pub fn pending(&self, role: Role) -> usize {
        self.queues.lock().unwrap().get(&role).map_or(0, VecDeque::len)
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, LlmError> {
        self.calls
            .lock()
            .unwrap()
            .push((req.role, req.prompt.to_string()));
        let own = self
            .queues
            .lock()
            .unwrap()
            .get_mut(&req.role)
            .and_then(VecDeque::pop_front);
        let text = match own {
            Some(t) => t,
            None => self.shared.lock().unwrap().pop_front().ok_or_else(|| {
                LlmError::BackendUnavailable(format!("script exhausted for role {}", req.role))
            })?,
        };
        Ok(Completion {
            text,
            latency_ms: 0.0,
        })
    }
}

type ReplyFn = dyn Fn(Role, &str) -> Result<String, LlmError> + Send + Sync;

/// Replies computed from the prompt; handy for judges keyed on content.
pub struct FnBackend {
    f: Box<ReplyFn>,
}

impl FnBackend {
    pub fn new(f: impl Fn(Role, &str) -> Result<String, LlmError> + Send + Sync + 'static) -> Self {
        Self { f: Box::new(f) }
    }
}

impl CompletionBackend for FnBackend {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, LlmError> {
        Ok(Completion {
            text: (self.f)(req.role, req.prompt)?,
            latency_ms: 0.0,
        })
    }
}

/// Serves a transcript strictly in order. The role and canonical prompt hash
/// of each call must match the next entry.
#[derive(Debug)]
pub struct ReplayBackend {
    transcript: Transcript,
    cursor: Mutex<usize>,
}

impl ReplayBackend {
    pub fn new(transcript: Transcript) -> Self {
        Self {
            transcript,
            cursor: Mutex::new(0),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        Ok(Self::new(Transcript::load(path)?))
    }

    pub fn consumed(&self) -> usize {
        *self.cursor.lock().unwrap()
    }

    pub fn remaining(&self) -> usize {
        self.transcript.len() - self.consumed()
    }
}

impl CompletionBackend for ReplayBackend {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, LlmError> {
        let mut cursor = self.cursor.lock().unwrap();
        let index = *cursor;
        let entry = self
            .transcript
            .entries
            .get(index)
            .ok_or(LlmError::ReplayExhausted { index })?;
        let hash = prompt_hash(req.prompt);
        if entry.role != req.role || entry.prompt_hash != hash {
            return Err(LlmError::ReplayPromptMismatch {
                index,
                expected: format!("{}:{}", entry.role, entry.prompt_hash),
                got: format!("{}:{}", req.role, hash),
            });
        }
        *cursor += 1;
        Ok(Completion {
            text: entry.response_text.clone(),
            latency_ms: entry.latency_ms,
        })
    }
}

/// Wraps another backend and records every successful call. With a sink
/// file, each entry is appended as a JSON line as soon as it completes.
pub struct RecordingBackend {
    inner: Arc<dyn CompletionBackend>,
    entries: Mutex<Vec<TranscriptEntry>>,
    sink: Option<Mutex<File>>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn CompletionBackend>) -> Self {
        Self {
            inner,
            entries: Mutex::new(Vec::new()),
            sink: None,
        }
    }

    pub fn to_file(inner: Arc<dyn CompletionBackend>, path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path.as_ref())?;
        Ok(Self {
            sink: Some(Mutex::new(f)),
            ..Self::new(inner)
        })
    }

    pub fn transcript(&self) -> Transcript {
        Transcript {
            entries: self.entries.lock().unwrap().clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl CompletionBackend for RecordingBackend {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, LlmError> {
        let c = self.inner.complete(req)?;
        let entry = TranscriptEntry::new(req.role, req.prompt, &c.text, c.latency_ms);
        if let Some(sink) = &self.sink {
            let mut f = sink.lock().unwrap();
            writeln!(f, "{}", entry.to_json_line())?;
            f.flush()?;
        }
        self.entries.lock().unwrap().push(entry);
        Ok(c)
    }
}
