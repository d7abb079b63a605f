//! Caption-corpus metrics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub dataset: String,
    pub isovalue: f64,
    pub angle_label: String,
    pub caption: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CaptionCorpus {
    records: Vec<CaptionRecord>,
}

impl CaptionCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fails on a duplicate (dataset, isovalue, angle_label).
    pub fn from_records(records: Vec<CaptionRecord>) -> Result<Self, MetricsError> {
        let mut c = Self::new();
        for r in records {
            c.push(r)?;
        }
        Ok(c)
    }

    /// Bare captions; each gets a distinct synthetic angle label.
    pub fn from_captions<S: AsRef<str>>(captions: &[S]) -> Self {
        Self {
            records: captions
                .iter()
                .enumerate()
                .map(|(i, c)| CaptionRecord {
                    dataset: String::new(),
                    isovalue: 0.0,
                    angle_label: format!("c{i}"),
                    caption: c.as_ref().to_string(),
                })
                .collect(),
        }
    }

    pub fn push(&mut self, r: CaptionRecord) -> Result<(), MetricsError> {
        let dup = self.records.iter().any(|e| {
            e.dataset == r.dataset
                && e.isovalue.to_bits() == r.isovalue.to_bits()
                && e.angle_label == r.angle_label
        });
        if dup {
            return Err(MetricsError::DuplicateRecord(format!(
                "{} @ {} / {}",
                r.dataset, r.isovalue, r.angle_label
            )));
        }
        self.records.push(r);
        Ok(())
    }

    pub fn records(&self) -> &[CaptionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn captions(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.caption.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Embedding {
    Dense(Vec<f64>),
    Sparse(BTreeMap<String, f64>),
}

impl Embedding {
    pub fn norm(&self) -> f64 {
        match self {
            Embedding::Dense(v) => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Embedding::Sparse(m) => m.values().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }
}

/// Cosine similarity; 0 when either side is the zero vector.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, MetricsError> {
    let dot = match (a, b) {
        (Embedding::Dense(x), Embedding::Dense(y)) => {
            if x.len() != y.len() {
                return Err(MetricsError::Embedding(format!(
                    "dimension mismatch {} vs {}",
                    x.len(),
                    y.len()
                )));
            }
            x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>()
        }
        (Embedding::Sparse(x), Embedding::Sparse(y)) => {
            let (small, large) = if x.len() <= y.len() { (x, y) } else { (y, x) };
            small
                .iter()
                .filter_map(|(k, v)| large.get(k).map(|w| v * w))
                .sum::<f64>()
        }
        _ => {
            return Err(MetricsError::Embedding(
                "cannot compare dense and sparse embeddings".into(),
            ))
        }
    };
    let n = a.norm() * b.norm();
    if n == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / n).clamp(-1.0, 1.0))
}

pub trait Embedder {
    fn embed(&self, text: &str) -> Result<Embedding, MetricsError>;
}

/// L2-normalized term-frequency vector over the standard tokenization.
#[derive(Debug, Clone, Copy, Default)]
pub struct TermFrequencyEmbedder;

impl Embedder for TermFrequencyEmbedder {
    fn embed(&self, text: &str) -> Result<Embedding, MetricsError> {
        let mut tf: BTreeMap<String, f64> = BTreeMap::new();
        for t in tokenize(text) {
            *tf.entry(t).or_default() += 1.0;
        }
        let n = tf.values().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            tf.values_mut().for_each(|v| *v /= n);
        }
        Ok(Embedding::Sparse(tf))
    }
}

pub fn vocabulary(corpus: &CaptionCorpus) -> BTreeSet<String> {
    corpus.captions().flat_map(tokenize).collect()
}

pub fn vocabulary_size(corpus: &CaptionCorpus) -> usize {
    vocabulary(corpus).len()
}

fn mean_pairwise<'a>(
    captions: impl Iterator<Item = &'a str>,
    embedder: &dyn Embedder,
) -> Result<Option<f64>, MetricsError> {
    let vecs: Vec<Embedding> = captions
        .map(|c| embedder.embed(c))
        .collect::<Result<_, _>>()?;
    if vecs.len() < 2 {
        return Ok(None);
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..vecs.len() {
        for j in (i + 1)..vecs.len() {
            sum += cosine(&vecs[i], &vecs[j])?;
            pairs += 1;
        }
    }
    Ok(Some(sum / pairs as f64))
}

/// Mean cosine over all unordered caption pairs.
pub fn mean_pairwise_similarity(
    corpus: &CaptionCorpus,
    embedder: &dyn Embedder,
) -> Result<f64, MetricsError> {
    mean_pairwise(corpus.captions(), embedder)?.ok_or(MetricsError::TooFewCaptions(corpus.len()))
}

/// Mean over (dataset, isovalue) groups of the within-group mean pairwise
/// cosine. Singleton groups are skipped.
pub fn caption_stability(
    corpus: &CaptionCorpus,
    embedder: &dyn Embedder,
) -> Result<f64, MetricsError> {
    let mut groups: BTreeMap<(&str, u64), Vec<&str>> = BTreeMap::new();
    for r in corpus.records() {
        groups
            .entry((r.dataset.as_str(), r.isovalue.to_bits()))
            .or_default()
            .push(&r.caption);
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for caps in groups.values() {
        if let Some(m) = mean_pairwise(caps.iter().copied(), embedder)? {
            sum += m;
            n += 1;
        }
    }
    if n == 0 {
        return Err(MetricsError::NoEligibleGroups);
    }
    Ok(sum / n as f64)
}

/// Exact token counts for each term (terms are lowercased first).
pub fn keyword_frequency(corpus: &CaptionCorpus, terms: &[&str]) -> BTreeMap<String, usize> {
    let mut out: BTreeMap<String, usize> = terms.iter().map(|t| (t.to_lowercase(), 0)).collect();
    for c in corpus.captions() {
        for tok in tokenize(c) {
            if let Some(n) = out.get_mut(&tok) {
                *n += 1;
            }
        }
    }
    out
}
