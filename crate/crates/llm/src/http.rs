use std::time::{Duration, Instant};

use base64::Engine;
use serde_json::{json, Value};

use crate::backend::{Completion, CompletionBackend, CompletionRequest};
use crate::LlmError;

/// Generic chat-completion client: POST `{model, messages, temperature}` and
/// read `choices[0].message.content`. Endpoint and key come from the role
/// config; a role without an endpoint is unavailable.
pub struct HttpChatBackend {
    client: reqwest::blocking::Client,
}

impl HttpChatBackend {
    pub fn new(timeout: Duration) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::BackendUnavailable(e.to_string()))?;
        Ok(Self { client })
    }
}

pub(crate) fn request_body(req: &CompletionRequest<'_>) -> Value {
    let content = match req.image_png {
        None => Value::String(req.prompt.to_string()),
        Some(png) => {
            let b64 = base64::engine::general_purpose::STANDARD.encode(png);
            json!([
                {"type": "text", "text": req.prompt},
                {"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{b64}")}}
            ])
        }
    };
    json!({
        "model": req.config.model_id,
        "messages": [{"role": "user", "content": content}],
        "temperature": req.config.temperature,
    })
}

pub(crate) fn extract_content(body: &Value) -> Result<String, LlmError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::BackendUnavailable("response missing choices[0].message.content".into()))
}

impl CompletionBackend for HttpChatBackend {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, LlmError> {
        let url = req.config.endpoint_url.as_deref().ok_or_else(|| {
            LlmError::BackendUnavailable(format!("role {} has no endpoint_url", req.role))
        })?;
        let mut http = self.client.post(url).json(&request_body(req));
        if let Some(var) = &req.config.api_key_env {
            let key = std::env::var(var)
                .map_err(|_| LlmError::BackendUnavailable(format!("env var {var} not set")))?;
            http = http.bearer_auth(key);
        }
        let start = Instant::now();
        let resp = http
            .send()
            .map_err(|e| LlmError::BackendUnavailable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(LlmError::BackendUnavailable(format!("{url} returned {status}")));
        }
        let body: Value = resp
            .json()
            .map_err(|e| LlmError::BackendUnavailable(e.to_string()))?;
        let latency_ms = start.elapsed().as_secs_f64() * 1000.0;
        Ok(Completion {
            text: extract_content(&body)?,
            latency_ms,
        })
    }
}
