use std::sync::Mutex;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{BackendError, GroundingBackend};
use crate::render::RgbImage;

/// Environment variable holding the bearer token for the remote endpoint.
pub const API_KEY_ENV: &str = "SLOTGOAL_API_KEY";

/// Marker directive appended to every instruction sent to an image editor.
pub const PROMPT_DIRECTIVE: &str =
    "Edit this image: render a single small solid blue sphere marker at the described slot; change nothing else. Keep the image size unchanged.";

const MAX_REPLY_BYTES: u64 = 64 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Never serialized; read from [`API_KEY_ENV`] when absent.
    #[serde(skip)]
    pub api_key: Option<String>,
}

fn default_timeout() -> u64 {
    60
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout_secs: default_timeout(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        }
    }
}

#[derive(Serialize)]
struct Request<'a> {
    image: String,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct Reply {
    image: String,
}

pub fn prompt_for(instruction_text: &str) -> String {
    format!("{PROMPT_DIRECTIVE}\nInstruction: {instruction_text}")
}

/// HTTP image-editing backend. Calls are single-flight: concurrent callers
/// queue on an internal lock so rate limits stay a backend concern.
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    queue: Mutex<()>,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self {
            config,
            agent,
            queue: Mutex::new(()),
        }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }
}

fn transport(e: impl std::fmt::Display) -> BackendError {
    BackendError::TransportError(e.to_string())
}

impl GroundingBackend for RemoteBackend {
    fn ground(&self, head_rgb: &RgbImage, instruction_text: &str) -> Result<RgbImage, BackendError> {
        let _turn = self.queue.lock().unwrap_or_else(|p| p.into_inner());
        let png = head_rgb
            .encode_png(&[])
            .map_err(|e| BackendError::BackendRefusal(format!("cannot encode request image: {e}")))?;
        let prompt = prompt_for(instruction_text);
        let body = Request {
            image: B64.encode(png),
            prompt: &prompt,
        };
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| match e {
            ureq::Error::Json(j) => BackendError::BackendRefusal(j.to_string()),
            other => transport(other),
        })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .with_config()
            .limit(MAX_REPLY_BYTES)
            .read_to_string()
            .map_err(transport)?;
        if !(200..300).contains(&status) {
            let snippet: String = text.chars().take(200).collect();
            return Err(BackendError::BackendRefusal(format!("HTTP {status}: {snippet}")));
        }
        let reply: Reply = serde_json::from_str(&text)
            .map_err(|e| BackendError::BackendRefusal(format!("reply is not a valid document: {e}")))?;
        let bytes = B64
            .decode(reply.image.trim())
            .map_err(|e| BackendError::BackendRefusal(format!("reply image is not base64: {e}")))?;
        let img = RgbImage::decode_png(&bytes)
            .map_err(|e| BackendError::BackendRefusal(format!("reply image is not a PNG: {e}")))?;
        if img.width() != head_rgb.width() || img.height() != head_rgb.height() {
            return Err(BackendError::DimensionMismatch {
                width: head_rgb.width(),
                height: head_rgb.height(),
                got_width: img.width(),
                got_height: img.height(),
            });
        }
        Ok(img)
    }
}
