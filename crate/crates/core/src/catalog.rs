//! Dataset catalog: a UTF-8 text file of `name<TAB>path[<TAB>readme_path[<TAB>notes]]`
//! lines. Blank lines and lines starting with `#` are ignored.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum characters of a README shown in a catalog summary.
const README_DIGEST_CHARS: usize = 240;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog file not readable: {path}: {source}")]
    Unreadable {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: expected `name<TAB>path[<TAB>readme]`, got {text:?}")]
    BadLine { line: usize, text: String },
    #[error("line {line}: duplicate dataset name {name:?}")]
    DuplicateName { line: usize, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    /// Path exactly as written in the catalog.
    pub path: String,
    pub readme_path: Option<String>,
    pub notes: Option<String>,
    /// Path resolved against the catalog's directory.
    pub resolved_path: PathBuf,
    pub resolved_readme: Option<PathBuf>,
    /// Flagged when the data file was not readable at load time.
    pub missing: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetCatalog {
    pub entries: Vec<CatalogEntry>,
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let pb = PathBuf::from(p);
    if pb.is_absolute() {
        pb
    } else {
        base.join(pb)
    }
}

impl DatasetCatalog {
    /// Parses catalog text; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CatalogError> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if fields.len() < 2 || fields.len() > 4 || fields[0].is_empty() || fields[1].is_empty()
            {
                return Err(CatalogError::BadLine {
                    line: i + 1,
                    text: line.to_owned(),
                });
            }
            let name = fields[0].to_owned();
            if !seen.insert(name.clone()) {
                return Err(CatalogError::DuplicateName { line: i + 1, name });
            }
            let opt = |k: usize| {
                fields
                    .get(k)
                    .filter(|s| !s.is_empty())
                    .map(|s| (*s).to_owned())
            };
            let readme_path = opt(2);
            let resolved_path = resolve(base_dir, fields[1]);
            let missing = std::fs::File::open(&resolved_path).is_err();
            entries.push(CatalogEntry {
                name,
                path: fields[1].to_owned(),
                resolved_readme: readme_path.as_deref().map(|r| resolve(base_dir, r)),
                readme_path,
                notes: opt(3),
                resolved_path,
                missing,
            });
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Unreadable {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&CatalogEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Finds an entry by name, listed path, file name or file stem.
    pub fn find(&self, key: &str) -> Option<&CatalogEntry> {
        let raw = key.trim();
        if let Some(e) = self.get(raw) {
            return Some(e);
        }
        let key = raw.trim_matches(|c| c == '"' || c == '\'');
        self.get(key)
            .or_else(|| self.entries.iter().find(|e| e.path == key))
            .or_else(|| {
                let stem = Path::new(key).file_stem()?.to_string_lossy().into_owned();
                self.entries.iter().find(|e| {
                    Path::new(&e.path)
                        .file_stem()
                        .is_some_and(|s| s.to_string_lossy() == stem)
                        || e.name == stem
                })
            })
    }

    /// Deterministic listing in catalog order with full paths and optional
    /// README digests.
    pub fn summary(&self) -> String {
        let mut out = match self.entries.len() {
            0 => return "0 datasets".to_owned(),
            1 => "1 dataset:\n".to_owned(),
            n => format!("{n} datasets:\n"),
        };
        for (i, e) in self.entries.iter().enumerate() {
            let _ = write!(out, "{}. {}: {}", i + 1, e.name, e.path);
            if e.missing {
                out.push_str(" [missing file]");
            }
            out.push('\n');
            if let Some(notes) = &e.notes {
                let _ = writeln!(out, "   notes: {notes}");
            }
            if let Some(digest) = e.resolved_readme.as_deref().and_then(readme_digest) {
                let _ = writeln!(out, "   readme: {digest}");
            }
        }
        out.truncate(out.trim_end().len());
        out
    }
}

fn readme_digest(path: &Path) -> Option<String> {
    let text = std::fs::read_to_string(path).ok()?;
    let flat = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if flat.is_empty() {
        return None;
    }
    if flat.chars().count() <= README_DIGEST_CHARS {
        return Some(flat);
    }
    let cut: String = flat.chars().take(README_DIGEST_CHARS).collect();
    Some(format!("{cut}..."))
}
