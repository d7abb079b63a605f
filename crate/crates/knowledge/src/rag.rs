//! TF-IDF retrieval over local documents and past interactions.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::{Arc, RwLock};

use isoscope_core::text::tokenize;
use serde::{Deserialize, Serialize};

use crate::KnowledgeError;

pub const MAX_CHUNK_CHARS: usize = 1200;
pub const CHUNK_OVERLAP_CHARS: usize = 200;
pub const CONTEXT_CAP_CHARS: usize = 6000;
pub const DEFAULT_TOP_K: usize = 4;
pub const RAG_INDEX_FILE_NAME: &str = "rag_index.bin";
pub const INDEX_MAGIC: &[u8; 8] = b"ISORAGIX";
pub const INDEX_VERSION: u32 = 1;
const CONTEXT_HEADER: &str = "Context:\n";
const CHUNK_SEPARATOR: &str = "\n---\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentChunk {
    pub doc_id: String,
    pub chunk_index: usize,
    pub text: String,
    pub term_weights: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk: DocumentChunk,
    pub score: f64,
}

fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Last `n` characters, advanced past the first whitespace so the overlap
/// starts on a word.
fn tail(s: &str, n: usize) -> &str {
    let total = char_len(s);
    if total <= n {
        return s;
    }
    let start = s.char_indices().nth(total - n).map_or(s.len(), |(i, _)| i);
    let t = &s[start..];
    match t.find(char::is_whitespace) {
        Some(i) => t[i..].trim_start(),
        None => t,
    }
}

/// Splits `s` at whitespace into pieces of at most `max` characters. A word
/// longer than `max` is cut mid-word.
fn hard_split(s: &str, max: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for word in s.split_whitespace() {
        let mut w = word;
        loop {
            let need = char_len(w) + usize::from(!cur.is_empty());
            if char_len(&cur) + need <= max {
                if !cur.is_empty() {
                    cur.push(' ');
                }
                cur.push_str(w);
                break;
            }
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
                continue;
            }
            let cut = w.char_indices().nth(max).map_or(w.len(), |(i, _)| i);
            out.push(w[..cut].to_string());
            w = &w[cut..];
            if w.is_empty() {
                break;
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Paragraphs (blank-line separated) are packed greedily into chunks of at
/// most 1200 characters. Each chunk after the first starts with up to 200
/// characters carried over from the end of the previous one.
pub fn chunk_text(text: &str) -> Vec<String> {
    let piece_max = MAX_CHUNK_CHARS - CHUNK_OVERLAP_CHARS - 2;
    let mut pieces: Vec<String> = Vec::new();
    let mut para = Vec::new();
    for line in text.lines().chain(std::iter::once("")) {
        if line.trim().is_empty() {
            if !para.is_empty() {
                let p = para.join("\n");
                if char_len(&p) > piece_max {
                    pieces.extend(hard_split(&p, piece_max));
                } else {
                    pieces.push(p);
                }
                para.clear();
            }
        } else {
            para.push(line.trim_end());
        }
    }
    let mut chunks = Vec::new();
    let mut cur = String::new();
    for p in pieces {
        if cur.is_empty() {
            cur = p;
        } else if char_len(&cur) + 2 + char_len(&p) <= MAX_CHUNK_CHARS {
            cur.push_str("\n\n");
            cur.push_str(&p);
        } else {
            let overlap = tail(&cur, CHUNK_OVERLAP_CHARS).to_string();
            chunks.push(std::mem::take(&mut cur));
            cur = if overlap.is_empty() {
                p
            } else {
                format!("{overlap}\n\n{p}")
            };
        }
    }
    if !cur.trim().is_empty() {
        chunks.push(cur);
    }
    chunks
}

fn term_counts(text: &str) -> BTreeMap<String, f64> {
    let mut tf = BTreeMap::new();
    for t in tokenize(text) {
        *tf.entry(t).or_insert(0.0) += 1.0;
    }
    tf
}

/// Smoothed inverse document frequency, `ln((1 + N) / (1 + df)) + 1`.
pub fn smooth_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

fn cosine_sparse(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let dot: f64 = small
        .iter()
        .filter_map(|(k, v)| large.get(k).map(|w| v * w))
        .sum();
    let na = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Immutable snapshot of the chunk set with weights computed over it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RagIndex {
    chunks: Vec<DocumentChunk>,
    idf: BTreeMap<String, f64>,
}

impl RagIndex {
    pub fn chunks(&self) -> &[DocumentChunk] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn doc_ids(&self) -> BTreeSet<&str> {
        self.chunks.iter().map(|c| c.doc_id.as_str()).collect()
    }

    /// Replaces every chunk of `doc_id` and recomputes all weights.
    pub fn with_document(&self, doc_id: &str, text: &str) -> (Self, usize) {
        let mut chunks: Vec<DocumentChunk> = self
            .chunks
            .iter()
            .filter(|c| c.doc_id != doc_id)
            .cloned()
            .collect();
        let new: Vec<String> = chunk_text(text);
        let n = new.len();
        chunks.extend(new.into_iter().enumerate().map(|(i, t)| DocumentChunk {
            doc_id: doc_id.to_string(),
            chunk_index: i,
            text: t,
            term_weights: BTreeMap::new(),
        }));
        (Self::rebuild(chunks), n)
    }

    pub fn rebuild(mut chunks: Vec<DocumentChunk>) -> Self {
        chunks.sort_by(|a, b| a.doc_id.cmp(&b.doc_id).then(a.chunk_index.cmp(&b.chunk_index)));
        let counts: Vec<BTreeMap<String, f64>> = chunks.iter().map(|c| term_counts(&c.text)).collect();
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for tf in &counts {
            for k in tf.keys() {
                *df.entry(k.clone()).or_default() += 1;
            }
        }
        let n = chunks.len();
        let idf: BTreeMap<String, f64> = df.into_iter().map(|(k, d)| (k, smooth_idf(n, d))).collect();
        for (c, tf) in chunks.iter_mut().zip(counts) {
            c.term_weights = tf.into_iter().map(|(k, v)| (k.clone(), v * idf[&k])).collect();
        }
        Self { chunks, idf }
    }

    /// Query weights use the index's idf; unseen terms are dropped.
    pub fn query_weights(&self, query: &str) -> BTreeMap<String, f64> {
        term_counts(query)
            .into_iter()
            .filter_map(|(k, v)| self.idf.get(&k).map(|w| (k, v * w)))
            .collect()
    }

    /// Top `k` chunks by cosine, ties ordered by (doc_id, chunk_index).
    /// Chunks sharing no term with the query are not returned.
    pub fn retrieve(&self, query: &str, k: usize) -> Vec<ScoredChunk> {
        let q = self.query_weights(query);
        if q.is_empty() {
            return Vec::new();
        }
        let mut scored: Vec<ScoredChunk> = self
            .chunks
            .iter()
            .map(|c| ScoredChunk {
                score: cosine_sparse(&q, &c.term_weights),
                chunk: c.clone(),
            })
            .filter(|s| s.score > 0.0)
            .collect();
        scored.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.chunk.doc_id.cmp(&b.chunk.doc_id))
                .then(a.chunk.chunk_index.cmp(&b.chunk.chunk_index))
        });
        scored.truncate(k);
        scored
    }

    /// `magic | version (u32 LE) | payload length (u64 LE) | JSON payload`.
    pub fn encode(&self) -> Vec<u8> {
        let payload = serde_json::to_vec(&self.chunks).expect("chunks serialize");
        let mut out = Vec::with_capacity(20 + payload.len());
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        out
    }

    /// Weights are recomputed from the stored chunk text; stored weights that
    /// disagree are reported as corruption.
    pub fn decode(bytes: &[u8]) -> Result<Self, KnowledgeError> {
        let bad = |m: &str| KnowledgeError::BadIndex(m.to_string());
        if bytes.len() < 20 {
            return Err(bad("file shorter than header"));
        }
        if &bytes[..8] != INDEX_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != INDEX_VERSION {
            return Err(KnowledgeError::BadIndex(format!("unsupported version {version}")));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let body = &bytes[20..];
        if body.len() as u64 != len {
            return Err(KnowledgeError::BadIndex(format!(
                "payload length {} does not match header {len}",
                body.len()
            )));
        }
        let chunks: Vec<DocumentChunk> =
            serde_json::from_slice(body).map_err(|e| KnowledgeError::BadIndex(e.to_string()))?;
        let mut seen = BTreeSet::new();
        for c in &chunks {
            if c.text.trim().is_empty() {
                return Err(bad("empty chunk text"));
            }
            if !seen.insert((c.doc_id.as_str(), c.chunk_index)) {
                return Err(bad("duplicate chunk key"));
            }
        }
        let stored: BTreeMap<(String, usize), BTreeMap<String, f64>> = chunks
            .iter()
            .map(|c| ((c.doc_id.clone(), c.chunk_index), c.term_weights.clone()))
            .collect();
        let idx = Self::rebuild(chunks);
        let consistent = idx.chunks.iter().all(|c| {
            let s = &stored[&(c.doc_id.clone(), c.chunk_index)];
            s.len() == c.term_weights.len()
                && s.iter().all(|(k, v)| {
                    c.term_weights
                        .get(k)
                        .is_some_and(|w| (v - w).abs() <= 1e-9 * w.abs().max(1.0))
                })
        });
        if !consistent {
            return Err(bad("stored weights do not match chunk text"));
        }
        Ok(idx)
    }
}

/// Builds the prompt sent to the qa role: retrieved chunks under a
/// `Context:` header, then the query. The context block is capped at 6000
/// characters by dropping the lowest-scoring chunks first.
pub fn build_augmented_prompt(query: &str, retrieved: &[ScoredChunk]) -> String {
    let mut keep: Vec<&ScoredChunk> = retrieved.iter().collect();
    loop {
        if keep.is_empty() {
            return query.to_string();
        }
        let body = keep
            .iter()
            .map(|s| s.chunk.text.as_str())
            .collect::<Vec<_>>()
            .join(CHUNK_SEPARATOR);
        let context = format!("{CONTEXT_HEADER}{body}");
        if char_len(&context) <= CONTEXT_CAP_CHARS {
            return format!("{context}\n\n{query}");
        }
        // retrieved is sorted best first, so the last one scores lowest
        keep.pop();
    }
}

/// Shared store with copy-on-write rebuilds: readers keep the snapshot they
/// started with while an ingest swaps in a new one.
#[derive(Debug, Default)]
pub struct RagStore {
    index: RwLock<Arc<RagIndex>>,
}

impl RagStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_index(index: RagIndex) -> Self {
        Self {
            index: RwLock::new(Arc::new(index)),
        }
    }

    pub fn snapshot(&self) -> Arc<RagIndex> {
        self.index.read().unwrap().clone()
    }

    pub fn ingest_text(&self, doc_id: &str, text: &str) -> usize {
        let mut guard = self.index.write().unwrap();
        let (next, n) = guard.with_document(doc_id, text);
        *guard = Arc::new(next);
        n
    }

    /// Reads a text document. A non-UTF-8 file (e.g. a PDF) is read from a
    /// sidecar `<name>.txt` or `<stem>.txt` next to it.
    pub fn ingest_document(&self, path: &Path) -> Result<usize, KnowledgeError> {
        let unreadable = |why: String| KnowledgeError::UnreadableDocument {
            path: path.to_path_buf(),
            reason: why,
        };
        let bytes = std::fs::read(path).map_err(|e| unreadable(e.to_string()))?;
        let text = match String::from_utf8(bytes) {
            Ok(t) => t,
            Err(_) => {
                let mut side = path.as_os_str().to_owned();
                side.push(".txt");
                let sidecars = [std::path::PathBuf::from(side), path.with_extension("txt")];
                sidecars
                    .iter()
                    .filter(|p| p.as_path() != path)
                    .find_map(|p| std::fs::read_to_string(p).ok())
                    .ok_or_else(|| unreadable("binary file without a text sidecar".into()))?
            }
        };
        let doc_id = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Ok(self.ingest_text(&doc_id, &text))
    }

    /// Ingests every regular file in `dir` (not recursive) except sidecars
    /// of binary files. Returns the total number of chunks.
    pub fn ingest_dir(&self, dir: &Path) -> Result<usize, KnowledgeError> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .flatten()
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        paths.sort();
        let mut total = 0;
        for p in &paths {
            let is_sidecar = p.extension().is_some_and(|e| e == "txt")
                && p.file_stem()
                    .map(|s| dir.join(s))
                    .is_some_and(|orig| orig != *p && paths.contains(&orig) && std::fs::read_to_string(&orig).is_err());
            if is_sidecar {
                continue;
            }
            match self.ingest_document(p) {
                Ok(n) => total += n,
                Err(e) => log::warn!("skipping {}: {e}", p.display()),
            }
        }
        Ok(total)
    }

    /// Stores one chat turn for later retrieval.
    pub fn ingest_interaction(&self, session_id: &str, turn: usize, text: &str) -> usize {
        self.ingest_text(&format!("session:{session_id}:{turn:04}"), text)
    }

    pub fn retrieve(&self, query: &str, k: usize) -> Result<Vec<ScoredChunk>, KnowledgeError> {
        let idx = self.snapshot();
        if idx.is_empty() {
            return Err(KnowledgeError::EmptyIndex);
        }
        Ok(idx.retrieve(query, k))
    }

    pub fn augment_prompt(&self, query: &str, k: usize) -> String {
        build_augmented_prompt(query, &self.snapshot().retrieve(query, k))
    }

    pub fn save(&self, path: &Path) -> Result<(), KnowledgeError> {
        let bytes = self.snapshot().encode();
        let tmp = path.with_extension("bin.tmp");
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, KnowledgeError> {
        Ok(Self::from_index(RagIndex::decode(&std::fs::read(path)?)?))
    }
}
