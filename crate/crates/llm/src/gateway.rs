use std::sync::{Arc, OnceLock};

use isoscope_core::metrics::{Embedder, Embedding, TermFrequencyEmbedder};
use isoscope_core::render::ImageBuffer;
use regex::Regex;
use sha2::{Digest, Sha256};

use crate::backend::{Completion, CompletionBackend, CompletionRequest};
use crate::caption::Captioner;
use crate::{GatewayConfig, LlmError, Role, RoleConfig};

pub const VISION_PROMPT: &str = "Describe the visible structures in this isosurface rendering of a scientific volume. \
Name anatomical or physical features when you can identify them.";

type SharedEmbedder = Arc<dyn Embedder + Send + Sync>;

/// Role-routed access to completion, captioning, embedding and judging.
/// Cheap to clone; sessions that need their own replay cursor clone it with
/// a different backend.
#[derive(Clone)]
pub struct Gateway {
    config: Arc<GatewayConfig>,
    backend: Arc<dyn CompletionBackend>,
    captioner: Option<Arc<dyn Captioner>>,
    embedder: SharedEmbedder,
}

impl Gateway {
    pub fn new(config: GatewayConfig, backend: Arc<dyn CompletionBackend>) -> Self {
        Self {
            config: Arc::new(config),
            backend,
            captioner: None,
            embedder: Arc::new(TermFrequencyEmbedder),
        }
    }

    /// Captions come from `captioner` instead of the vision role.
    pub fn with_captioner(mut self, captioner: Arc<dyn Captioner>) -> Self {
        self.captioner = Some(captioner);
        self
    }

    pub fn with_embedder(mut self, embedder: SharedEmbedder) -> Self {
        self.embedder = embedder;
        self
    }

    pub fn with_backend(&self, backend: Arc<dyn CompletionBackend>) -> Self {
        Self {
            backend,
            ..self.clone()
        }
    }

    /// True when captions come from a local captioner rather than the
    /// vision role.
    pub fn has_captioner(&self) -> bool {
        self.captioner.is_some()
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn route(&self, role: Role) -> &RoleConfig {
        self.config.role(role)
    }

    pub fn backend(&self) -> &Arc<dyn CompletionBackend> {
        &self.backend
    }

    pub fn complete(&self, role: Role, prompt: &str) -> Result<Completion, LlmError> {
        let req = CompletionRequest {
            role,
            config: self.route(role),
            prompt,
            image_png: None,
        };
        let c = self.backend.complete(&req)?;
        log::debug!("{role} completion via {} in {:.1} ms", req.config.model_id, c.latency_ms);
        Ok(c)
    }

    pub fn caption_image(&self, image: &ImageBuffer, context: &str) -> Result<String, LlmError> {
        let text = match &self.captioner {
            Some(c) => c.caption(image, context)?,
            None => {
                let png = image
                    .encode_png()
                    .map_err(|e| LlmError::BackendUnavailable(e.to_string()))?;
                let prompt = format!(
                    "{VISION_PROMPT}\nContext: {context}\nimage_sha256={}",
                    hex::encode(Sha256::digest(&png))
                );
                let req = CompletionRequest {
                    role: Role::Vision,
                    config: self.route(Role::Vision),
                    prompt: &prompt,
                    image_png: Some(&png),
                };
                self.backend.complete(&req)?.text
            }
        };
        let text = text.trim().to_string();
        if text.is_empty() {
            return Err(LlmError::BackendUnavailable("captioner returned an empty caption".into()));
        }
        Ok(text)
    }

    pub fn embed(&self, text: &str) -> Result<Embedding, LlmError> {
        self.embedder
            .embed(text)
            .map_err(|e| LlmError::BackendUnavailable(e.to_string()))
    }

    pub fn embedder(&self) -> &SharedEmbedder {
        &self.embedder
    }

    /// Asks the judge role for a 0..100 score of `candidate` against
    /// `reference`. A reply without an in-range number is an error.
    pub fn judge_caption(&self, candidate: &str, reference: &str) -> Result<f64, LlmError> {
        let prompt = format!(
            "Compare the candidate caption to the ground truth caption and rate how well the candidate \
             describes the same image.\nGround truth: {reference}\nCandidate: {candidate}\n\
             Reply with a single score from 0 to 100."
        );
        let reply = self.complete(Role::Judge, &prompt)?.text;
        parse_score(&reply).ok_or(LlmError::UnparseableJudgment(reply))
    }
}

pub fn parse_score(reply: &str) -> Option<f64> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"-?\d+(?:\.\d+)?").unwrap());
    let v: f64 = re.find(reply)?.as_str().parse().ok()?;
    (0.0..=100.0).contains(&v).then_some(v)
}
