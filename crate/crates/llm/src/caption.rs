use std::sync::OnceLock;

use isoscope_core::render::ImageBuffer;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::LlmError;

pub const EMPTY_SURFACE_CAPTION: &str = "An empty surface with no visible structure.";

pub trait Captioner: Send + Sync {
    fn caption(&self, image: &ImageBuffer, context: &str) -> Result<String, LlmError>;
}

/// A term the synthetic captioner mentions whenever the isovalue in the
/// caption context lies in `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBand {
    pub term: String,
    pub lo: f64,
    pub hi: f64,
}

impl FeatureBand {
    pub fn new(term: impl Into<String>, lo: f64, hi: f64) -> Self {
        Self {
            term: term.into(),
            lo,
            hi,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Reads `isovalue=<number>` out of a caption context string.
pub fn context_isovalue(context: &str) -> Option<f64> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"isovalue=([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)").unwrap());
    re.captures(context)?.get(1)?.as_str().parse().ok()
}

/// Deterministic stand-in for a vision model. The caption is a template
/// filled from the lit-pixel fraction and centroid, followed by one sentence
/// per feature band that contains the context isovalue. With `detailed` off
/// the template collapses to a single fixed sentence.
#[derive(Debug, Clone, Default)]
pub struct SyntheticCaptioner {
    pub bands: Vec<FeatureBand>,
    pub detailed: bool,
}

impl SyntheticCaptioner {
    pub fn new(bands: Vec<FeatureBand>) -> Self {
        Self {
            bands,
            detailed: true,
        }
    }

    pub fn fixed_vocabulary() -> Self {
        Self {
            bands: Vec::new(),
            detailed: false,
        }
    }
}

fn size_word(f: f64) -> &'static str {
    match f {
        f if f < 0.05 => "tiny",
        f if f < 0.2 => "small",
        f if f < 0.45 => "medium",
        _ => "large",
    }
}

fn position_phrase(cx: f64, cy: f64) -> String {
    let h = if cx < 0.4 {
        "left"
    } else if cx > 0.6 {
        "right"
    } else {
        ""
    };
    let v = if cy < 0.4 {
        "upper"
    } else if cy > 0.6 {
        "lower"
    } else {
        ""
    };
    match (v, h) {
        ("", "") => "near the center".to_string(),
        ("", h) | (h, "") => format!("toward the {h}"),
        (v, h) => format!("toward the {v} {h}"),
    }
}

impl Captioner for SyntheticCaptioner {
    fn caption(&self, image: &ImageBuffer, context: &str) -> Result<String, LlmError> {
        let Some((cx, cy)) = image.lit_centroid() else {
            return Ok(EMPTY_SURFACE_CAPTION.to_string());
        };
        let mut out = if self.detailed {
            format!(
                "A {} pale isosurface {} of the frame.",
                size_word(image.lit_fraction()),
                position_phrase(cx, cy)
            )
        } else {
            "A rendered isosurface.".to_string()
        };
        if let Some(iso) = context_isovalue(context) {
            for b in self.bands.iter().filter(|b| b.contains(iso)) {
                out.push_str(&format!(" The {} is clearly visible.", b.term));
            }
        }
        Ok(out)
    }
}
