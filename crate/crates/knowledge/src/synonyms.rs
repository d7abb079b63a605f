//! Optional user synonym table for feature matching.
//!
//! File format is TOML, one key per feature term:
//!
//! ```toml
//! skull = ["cranium", "bone"]
//! nose = ["nasal"]
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use isoscope_core::text::tokenize;

use crate::KnowledgeError;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Synonyms {
    map: BTreeMap<String, BTreeSet<String>>,
}

impl Synonyms {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, KnowledgeError> {
        let raw: BTreeMap<String, Vec<String>> =
            toml::from_str(text).map_err(|e| KnowledgeError::BadSynonyms(e.to_string()))?;
        let mut s = Self::new();
        for (k, vs) in raw {
            for v in vs {
                s.add(&k, &v)?;
            }
        }
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KnowledgeError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| KnowledgeError::BadSynonyms(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(&text)
    }

    /// Both sides must be single tokens after normalization.
    pub fn add(&mut self, term: &str, synonym: &str) -> Result<(), KnowledgeError> {
        let t = single_token(term)?;
        let s = single_token(synonym)?;
        self.map.entry(t).or_default().insert(s);
        Ok(())
    }

    /// The feature's own tokens plus any synonyms listed for them.
    pub fn expand(&self, feature: &str) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = tokenize(feature).into_iter().collect();
        let extra: Vec<String> = out
            .iter()
            .filter_map(|t| self.map.get(t))
            .flatten()
            .cloned()
            .collect();
        out.extend(extra);
        out
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn single_token(s: &str) -> Result<String, KnowledgeError> {
    let toks = tokenize(s);
    match toks.as_slice() {
        [t] => Ok(t.clone()),
        _ => Err(KnowledgeError::BadSynonyms(format!("{s:?} is not a single token"))),
    }
}
