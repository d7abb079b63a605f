//! Sweeps, feature queries and the self-improvement loop over the
//! screenshot knowledge base.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock, RwLock};

use isoscope_core::clock::SharedClock;
use isoscope_core::metrics::{mean_pairwise_similarity, vocabulary_size, CaptionCorpus, CaptionRecord};
use isoscope_core::render::{sweep_file_name, CameraAngle, ImageBuffer, IsosurfaceRenderer, ReferenceRenderer};
use isoscope_core::text::{keywords, tokenize};
use isoscope_core::VolumeDataset;
use isoscope_llm::{Gateway, LlmError, Role};
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::kb::{KnowledgeBase, ScreenshotRecord};
use crate::synonyms::Synonyms;
use crate::KnowledgeError;

pub const MAX_PROMPT_CANDIDATES: usize = 20;
pub const DEFAULT_GROWTH_FACTOR: f64 = 2.0;
pub const DEFAULT_MAX_ROUNDS: usize = 4;
pub const SWEEP_RENDER_SIZE: (usize, usize) = (256, 256);

/// `n` equally spaced values strictly inside `[lo, hi]`.
pub fn interior_isovalues(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| lo + (hi - lo) * i as f64 / (n + 1) as f64)
        .collect()
}

/// Adds `extra` values to a sorted interior grid by repeatedly splitting the
/// widest gap of `lo, existing.., hi` at its midpoint (lowest gap wins ties).
/// Doubling a uniform interior grid of n values splits every gap except the
/// top one.
pub fn densify(existing: &[f64], lo: f64, hi: f64, extra: usize) -> Vec<f64> {
    let mut pts: Vec<f64> = Vec::with_capacity(existing.len() + extra + 2);
    pts.push(lo);
    pts.extend(existing.iter().copied().filter(|v| *v > lo && *v < hi));
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let eps = 1e-9 * (hi - lo).abs().max(f64::MIN_POSITIVE);
    let mut added = Vec::with_capacity(extra);
    for _ in 0..extra {
        let widest = pts.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        if widest <= eps {
            break;
        }
        let i = pts
            .windows(2)
            .position(|w| w[1] - w[0] >= widest - eps)
            .expect("a widest gap exists");
        let mid = 0.5 * (pts[i] + pts[i + 1]);
        pts.insert(i + 1, mid);
        added.push(mid);
    }
    added.sort_by(f64::total_cmp);
    added
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    Llm,
    Fallback,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorMode {
    /// Ask the qa role, fall back when it is unavailable or unparseable.
    #[default]
    LlmWithFallback,
    FallbackOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub isovalue: f64,
    pub caption: String,
    pub match_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureQueryResult {
    pub feature: String,
    pub chosen_isovalue: f64,
    pub candidates: Vec<Candidate>,
    pub selector: Selector,
    pub rationale: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KbStats {
    pub image_count: usize,
    pub vocabulary_size: usize,
    pub mean_pairwise_similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    pub round: usize,
    pub isovalue_count: usize,
    pub before: KbStats,
    pub after: KbStats,
    pub new_keywords: BTreeSet<String>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeReport {
    pub dataset: String,
    pub image_count: usize,
    pub vocabulary_size: usize,
    pub mean_pairwise_similarity: Option<f64>,
    pub per_feature_best: BTreeMap<String, Option<f64>>,
}

/// Max match count wins; among tied isovalues the lower median is chosen so
/// the answer is always one of the candidates.
pub fn fallback_select(candidates: &[Candidate]) -> Option<(f64, usize)> {
    let best = candidates.iter().map(|c| c.match_count).max()?;
    let mut tied: Vec<f64> = candidates
        .iter()
        .filter(|c| c.match_count == best)
        .map(|c| c.isovalue)
        .collect();
    tied.sort_by(f64::total_cmp);
    Some((tied[(tied.len() - 1) / 2], tied.len()))
}

/// Per-isovalue match counts for `terms`, sorted by count descending then
/// isovalue ascending. Captions are aggregated across angles.
pub fn rank_candidates(records: &[ScreenshotRecord], terms: &BTreeSet<String>) -> Vec<Candidate> {
    let mut by_iso: BTreeMap<u64, (f64, usize, Option<&str>)> = BTreeMap::new();
    for r in records {
        let hits = tokenize(&r.caption).iter().filter(|t| terms.contains(*t)).count();
        if hits == 0 {
            continue;
        }
        let e = by_iso.entry(r.isovalue.to_bits()).or_insert((r.isovalue, 0, None));
        e.1 += hits;
        e.2.get_or_insert(&r.caption);
    }
    let mut out: Vec<Candidate> = by_iso
        .into_values()
        .map(|(isovalue, match_count, cap)| Candidate {
            isovalue,
            caption: cap.unwrap_or_default().to_string(),
            match_count,
        })
        .collect();
    out.sort_by(|a, b| {
        b.match_count
            .cmp(&a.match_count)
            .then(a.isovalue.total_cmp(&b.isovalue))
    });
    out
}

fn parse_isovalue_reply(reply: &str, candidates: &[Candidate]) -> Option<f64> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?").unwrap());
    let scale = candidates
        .iter()
        .map(|c| c.isovalue.abs())
        .fold(1.0, f64::max);
    re.find_iter(reply)
        .filter_map(|m| m.as_str().parse::<f64>().ok())
        .find_map(|v| {
            candidates
                .iter()
                .find(|c| (c.isovalue - v).abs() <= 1e-6 * scale)
                .map(|c| c.isovalue)
        })
}

#[derive(Debug, Clone)]
pub struct FeatureIndexConfig {
    pub image_dir: PathBuf,
    pub render_size: (usize, usize),
    pub selector: SelectorMode,
    pub tracked_features: Vec<String>,
}

impl FeatureIndexConfig {
    pub fn new(image_dir: impl Into<PathBuf>) -> Self {
        Self {
            image_dir: image_dir.into(),
            render_size: SWEEP_RENDER_SIZE,
            selector: SelectorMode::default(),
            tracked_features: Vec::new(),
        }
    }
}

struct Cell {
    isovalue: f64,
    angle: CameraAngle,
}

pub struct FeatureIndex {
    kb: Arc<KnowledgeBase>,
    gateway: Gateway,
    clock: SharedClock,
    synonyms: Synonyms,
    config: FeatureIndexConfig,
    renderer: Arc<dyn IsosurfaceRenderer>,
    volumes: RwLock<HashMap<String, Arc<VolumeDataset>>>,
    angles: RwLock<HashMap<String, Vec<CameraAngle>>>,
    sweep_lock: Mutex<()>,
}

impl FeatureIndex {
    pub fn new(
        kb: Arc<KnowledgeBase>,
        gateway: Gateway,
        clock: SharedClock,
        config: FeatureIndexConfig,
    ) -> Result<Self, KnowledgeError> {
        std::fs::create_dir_all(&config.image_dir)?;
        Ok(Self {
            kb,
            gateway,
            clock,
            synonyms: Synonyms::new(),
            config,
            renderer: Arc::new(ReferenceRenderer),
            volumes: RwLock::new(HashMap::new()),
            angles: RwLock::new(HashMap::new()),
            sweep_lock: Mutex::new(()),
        })
    }

    pub fn with_synonyms(mut self, synonyms: Synonyms) -> Self {
        self.synonyms = synonyms;
        self
    }

    /// Frames come from `renderer` instead of the built-in raycaster.
    pub fn with_renderer(mut self, renderer: Arc<dyn IsosurfaceRenderer>) -> Self {
        self.renderer = renderer;
        self
    }

    pub fn kb(&self) -> &Arc<KnowledgeBase> {
        &self.kb
    }

    pub fn config(&self) -> &FeatureIndexConfig {
        &self.config
    }

    /// Makes a volume available to `self_improve` without sweeping it.
    pub fn register_volume(&self, vol: Arc<VolumeDataset>) {
        self.volumes.write().unwrap().insert(vol.id().to_string(), vol);
    }

    pub fn run_sweep(
        &self,
        vol: Arc<VolumeDataset>,
        isovalue_count: usize,
        angles: &[CameraAngle],
    ) -> Result<Vec<ScreenshotRecord>, KnowledgeError> {
        if isovalue_count == 0 {
            return Err(KnowledgeError::InvalidParameter("isovalue_count must be >= 1".into()));
        }
        if angles.is_empty() {
            return Err(KnowledgeError::InvalidParameter("at least one camera angle is required".into()));
        }
        let (lo, hi) = vol.scalar_range();
        let isos = if lo == hi {
            vec![lo]
        } else {
            interior_isovalues(lo, hi, isovalue_count)
        };
        self.register_volume(vol.clone());
        self.angles
            .write()
            .unwrap()
            .insert(vol.id().to_string(), angles.to_vec());
        self.sweep_values(&vol, &isos, angles)
    }

    /// Renders, captions and stores every missing (isovalue, angle) cell.
    /// All new rows of one call are committed together.
    fn sweep_values(
        &self,
        vol: &VolumeDataset,
        isovalues: &[f64],
        angles: &[CameraAngle],
    ) -> Result<Vec<ScreenshotRecord>, KnowledgeError> {
        let _guard = self.sweep_lock.lock().unwrap();
        let dataset = vol.id().to_string();
        let mut cells = Vec::new();
        for &isovalue in isovalues {
            for a in angles {
                if !self.kb.contains(&dataset, isovalue, &a.label)? {
                    cells.push(Cell {
                        isovalue,
                        angle: a.clone(),
                    });
                }
            }
        }
        let images: Vec<Option<ImageBuffer>> = cells
            .par_iter()
            .map(|c| match self.renderer.render(vol, c.isovalue, &c.angle, self.config.render_size) {
                Ok(img) => Some(img),
                Err(e) => {
                    log::warn!("render failed for {dataset} at {} / {}: {e}", c.isovalue, c.angle.label);
                    None
                }
            })
            .collect();
        let caption_one = |(c, img): (&Cell, &Option<ImageBuffer>)| -> Result<Option<(PathBuf, String)>, KnowledgeError> {
            let Some(img) = img else { return Ok(None) };
            let path = self
                .config
                .image_dir
                .join(sweep_file_name(&dataset, c.isovalue, &c.angle.label));
            if let Err(e) = img.save_png(&path) {
                log::warn!("could not write {}: {e}", path.display());
                return Ok(None);
            }
            let ctx = format!("dataset={dataset} isovalue={} angle={}", c.isovalue, c.angle.label);
            let caption = self
                .gateway
                .caption_image(img, &ctx)
                .map_err(KnowledgeError::CaptionerUnavailable)?;
            Ok(Some((path, caption)))
        };
        // a remote vision role is called in cell order so recorded sessions replay
        let captioned: Vec<Option<(PathBuf, String)>> = if self.gateway.has_captioner() {
            cells.par_iter().zip(images.par_iter()).map(caption_one).collect::<Result<_, _>>()?
        } else {
            cells.iter().zip(images.iter()).map(caption_one).collect::<Result<_, _>>()?
        };
        let records: Vec<ScreenshotRecord> = cells
            .iter()
            .zip(captioned)
            .filter_map(|(c, out)| {
                let (image_path, caption) = out?;
                Some(ScreenshotRecord {
                    dataset: dataset.clone(),
                    isovalue: c.isovalue,
                    angle: c.angle.label.clone(),
                    image_path,
                    keywords: keywords(&caption),
                    caption,
                    created_at: self.clock.now(),
                })
            })
            .collect();
        let added = self.kb.insert_batch(&records)?;
        log::info!("sweep of {dataset}: {added} new records from {} cells", cells.len());
        Ok(records)
    }

    fn records_or_empty(&self, dataset: &str) -> Result<Vec<ScreenshotRecord>, KnowledgeError> {
        let recs = self.kb.records(dataset)?;
        if recs.is_empty() {
            return Err(KnowledgeError::EmptyKnowledgeBase(dataset.to_string()));
        }
        Ok(recs)
    }

    fn candidates_for(&self, records: &[ScreenshotRecord], feature: &str) -> Vec<Candidate> {
        rank_candidates(records, &self.synonyms.expand(feature))
    }

    pub fn query_feature(&self, dataset: &str, feature: &str) -> Result<FeatureQueryResult, KnowledgeError> {
        let records = self.records_or_empty(dataset)?;
        let candidates = self.candidates_for(&records, feature);
        if candidates.is_empty() {
            return Err(KnowledgeError::FeatureNotFound {
                dataset: dataset.to_string(),
                feature: feature.to_string(),
            });
        }
        if self.config.selector == SelectorMode::LlmWithFallback {
            match self.ask_selector(dataset, feature, &candidates) {
                Ok(Some((iso, reply))) => {
                    return Ok(FeatureQueryResult {
                        feature: feature.to_string(),
                        chosen_isovalue: iso,
                        candidates,
                        selector: Selector::Llm,
                        rationale: reply.trim().to_string(),
                    })
                }
                Ok(None) => log::info!("selector reply had no candidate isovalue; using fallback"),
                Err(e) => log::info!("selector unavailable ({e}); using fallback"),
            }
        }
        let (iso, tied) = fallback_select(&candidates).expect("candidates are non-empty");
        let best = candidates[0].match_count;
        Ok(FeatureQueryResult {
            feature: feature.to_string(),
            chosen_isovalue: iso,
            candidates,
            selector: Selector::Fallback,
            rationale: format!(
                "{best} caption mentions at the best isovalue; {tied} isovalue(s) tied, median taken"
            ),
        })
    }

    fn ask_selector(
        &self,
        dataset: &str,
        feature: &str,
        candidates: &[Candidate],
    ) -> Result<Option<(f64, String)>, LlmError> {
        let lines: Vec<String> = candidates
            .iter()
            .take(MAX_PROMPT_CANDIDATES)
            .map(|c| format!("- isovalue {}: {} mentions; caption: {}", c.isovalue, c.match_count, c.caption))
            .collect();
        let prompt = format!(
            "Screenshots of dataset {dataset} were captioned at several isovalues. \
             The user wants to see the feature \"{feature}\".\n{}\n\
             Reply with the single isovalue from this list that best shows the feature.",
            lines.join("\n")
        );
        let reply = self.gateway.complete(Role::Qa, &prompt)?.text;
        Ok(parse_isovalue_reply(&reply, candidates).map(|v| (v, reply)))
    }

    pub fn stats(&self, dataset: &str) -> Result<KbStats, KnowledgeError> {
        let records = self.kb.records(dataset)?;
        self.stats_of(&records)
    }

    fn stats_of(&self, records: &[ScreenshotRecord]) -> Result<KbStats, KnowledgeError> {
        let corpus = CaptionCorpus::from_records(
            records
                .iter()
                .map(|r| CaptionRecord {
                    dataset: r.dataset.clone(),
                    isovalue: r.isovalue,
                    angle_label: r.angle.clone(),
                    caption: r.caption.clone(),
                })
                .collect(),
        )?;
        let sim = if corpus.len() >= 2 {
            Some(mean_pairwise_similarity(&corpus, self.gateway.embedder().as_ref())?)
        } else {
            None
        };
        Ok(KbStats {
            image_count: corpus.len(),
            vocabulary_size: vocabulary_size(&corpus),
            mean_pairwise_similarity: sim,
        })
    }

    fn angles_for(&self, dataset: &str) -> Result<Vec<CameraAngle>, KnowledgeError> {
        if let Some(a) = self.angles.read().unwrap().get(dataset) {
            return Ok(a.clone());
        }
        let labels = self.kb.angles(dataset)?;
        labels
            .iter()
            .map(|l| CameraAngle::canonical_by_label(l).ok_or_else(|| KnowledgeError::UnknownAngle(l.clone())))
            .collect::<Result<_, _>>()
    }

    /// Grows the isovalue grid by `growth_factor` per round until a round
    /// adds no new keywords or `max_rounds` is reached.
    pub fn self_improve(
        &self,
        dataset: &str,
        growth_factor: f64,
        max_rounds: usize,
    ) -> Result<Vec<ImprovementReport>, KnowledgeError> {
        if !(growth_factor > 1.0) || !growth_factor.is_finite() {
            return Err(KnowledgeError::InvalidParameter(format!(
                "growth_factor must be > 1, got {growth_factor}"
            )));
        }
        let vol = self
            .volumes
            .read()
            .unwrap()
            .get(dataset)
            .cloned()
            .ok_or_else(|| KnowledgeError::UnknownVolume(dataset.to_string()))?;
        let angles = self.angles_for(dataset)?;
        let (lo, hi) = vol.scalar_range();
        let mut reports = Vec::new();
        for round in 1..=max_rounds {
            let records = self.records_or_empty(dataset)?;
            let before = self.stats_of(&records)?;
            let old_kw: BTreeSet<String> = records.iter().flat_map(|r| r.keywords.iter().cloned()).collect();
            let isos = self.kb.isovalues(dataset)?;
            let target = ((isos.len() as f64) * growth_factor).round() as usize;
            let extra = target.saturating_sub(isos.len()).max(1);
            let new_isos = densify(&isos, lo, hi, extra);
            let added = self.sweep_values(&vol, &new_isos, &angles)?;
            let after_records = self.kb.records(dataset)?;
            let after = self.stats_of(&after_records)?;
            let new_keywords: BTreeSet<String> = added
                .iter()
                .flat_map(|r| r.keywords.iter())
                .filter(|k| !old_kw.contains(*k))
                .cloned()
                .collect();
            let converged = new_keywords.is_empty();
            log::info!(
                "self-improve round {round} on {dataset}: {} -> {} images, {} new keywords",
                before.image_count,
                after.image_count,
                new_keywords.len()
            );
            reports.push(ImprovementReport {
                round,
                isovalue_count: isos.len() + new_isos.len(),
                before,
                after,
                new_keywords,
                converged,
            });
            if converged {
                break;
            }
        }
        Ok(reports)
    }

    pub fn knowledge_report(&self, dataset: &str) -> Result<KnowledgeReport, KnowledgeError> {
        let records = self.records_or_empty(dataset)?;
        let stats = self.stats_of(&records)?;
        let mut features: BTreeSet<String> = self.config.tracked_features.iter().cloned().collect();
        features.extend(self.synonyms.terms().map(str::to_string));
        let per_feature_best = features
            .into_iter()
            .map(|f| {
                let best = fallback_select(&self.candidates_for(&records, &f)).map(|(v, _)| v);
                (f, best)
            })
            .collect();
        Ok(KnowledgeReport {
            dataset: dataset.to_string(),
            image_count: stats.image_count,
            vocabulary_size: stats.vocabulary_size,
            mean_pairwise_similarity: stats.mean_pairwise_similarity,
            per_feature_best,
        })
    }
}
