//! Uniform access to model backends.
//!
//! A [`ModelRequest`] is backend-neutral; each backend encodes it as it
//! needs. Remote chat-completion APIs live in [`http`]; the deterministic
//! local backends (oracle, noisy, scripted) in [`local`] read the dataset
//! record attached to the request instead of the images.

mod config;
pub mod http;
mod limiter;
pub mod local;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Sample;

pub use config::{
    BackendConfig, ConfigError, HttpApiConfig, NoisyConfig, OracleConfig, OracleMode, Provider,
    RetryPolicy, ScriptedConfig, PRESETS,
};
pub use limiter::RateLimiter;
pub use local::{noisy_respond, noisy_respond_detailed, oracle_respond, NoisyResponse};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaType {
    Png,
    Jpeg,
}

impl MediaType {
    pub fn mime(&self) -> &'static str {
        match self {
            MediaType::Png => "image/png",
            MediaType::Jpeg => "image/jpeg",
        }
    }

    /// Guesses from a file extension.
    pub fn from_path(path: &std::path::Path) -> Option<MediaType> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "png" => Some(MediaType::Png),
            "jpg" | "jpeg" => Some(MediaType::Jpeg),
            _ => None,
        }
    }
}

/// Image bytes, either in memory or read from disk when a remote backend
/// encodes the request.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ImageData {
    Path(PathBuf),
    Bytes(Vec<u8>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImagePart {
    pub data: ImageData,
    pub media_type: MediaType,
}

impl ImagePart {
    pub fn load(&self) -> Result<Vec<u8>, GatewayError> {
        let bytes = match &self.data {
            ImageData::Bytes(b) => b.clone(),
            ImageData::Path(p) => std::fs::read(p).map_err(|e| {
                GatewayError::new(GatewayErrorKind::InvalidRequest, 0, format!("{}: {e}", p.display()))
            })?,
        };
        if bytes.is_empty() {
            return Err(GatewayError::new(
                GatewayErrorKind::InvalidRequest,
                0,
                "image has no bytes",
            ));
        }
        Ok(bytes)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Part {
    Text(String),
    Image(ImagePart),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub max_output_tokens: u32,
    pub temperature: f32,
    pub seed: Option<u64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            max_output_tokens: 1024,
            temperature: 0.0,
            seed: None,
        }
    }
}

/// Which ground-truth states the prompt already hands to the model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guidance {
    pub init: bool,
    pub goal: bool,
}

/// Out-of-band information for local backends. Never sent over the wire.
#[derive(Clone, Debug)]
pub struct RequestContext {
    pub sample: Arc<Sample>,
    pub guidance: Guidance,
}

#[derive(Clone, Debug)]
pub struct ModelRequest {
    pub parts: Vec<Part>,
    pub generation: GenerationParams,
    pub context: Option<RequestContext>,
}

impl ModelRequest {
    pub fn text(text: impl Into<String>) -> Self {
        ModelRequest {
            parts: vec![Part::Text(text.into())],
            generation: GenerationParams::default(),
            context: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !self.parts.iter().any(|p| matches!(p, Part::Text(_))) {
            return Err(GatewayError::new(
                GatewayErrorKind::InvalidRequest,
                0,
                "request needs at least one text part",
            ));
        }
        if !(0.0..=2.0).contains(&self.generation.temperature) {
            return Err(GatewayError::new(
                GatewayErrorKind::InvalidRequest,
                0,
                "temperature must lie in [0, 2]",
            ));
        }
        for part in &self.parts {
            if let Part::Image(ImagePart {
                data: ImageData::Bytes(b),
                ..
            }) = part
            {
                if b.is_empty() {
                    return Err(GatewayError::new(
                        GatewayErrorKind::InvalidRequest,
                        0,
                        "image has no bytes",
                    ));
                }
            }
        }
        Ok(())
    }

    /// All text parts joined by blank lines, images as placeholders.
    pub fn rendered_text(&self) -> String {
        self.parts
            .iter()
            .map(|p| match p {
                Part::Text(t) => t.clone(),
                Part::Image(ImagePart {
                    data: ImageData::Path(p),
                    ..
                }) => format!("[image: {}]", p.display()),
                Part::Image(ImagePart {
                    data: ImageData::Bytes(b),
                    ..
                }) => format!("[image: {} bytes]", b.len()),
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    pub fn without_images(mut self) -> Self {
        self.parts.retain(|p| matches!(p, Part::Text(_)));
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Completion {
    pub text: String,
    pub attempts: u32,
    pub latency: Duration,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GatewayErrorKind {
    Auth,
    RateLimited,
    Transport,
    MalformedResponse,
    /// The request itself is unusable (no text, unreadable image).
    InvalidRequest,
}

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{kind:?} after {attempts} attempt(s): {message}")]
pub struct GatewayError {
    pub kind: GatewayErrorKind,
    pub attempts: u32,
    pub message: String,
}

impl GatewayError {
    pub fn new(kind: GatewayErrorKind, attempts: u32, message: impl Into<String>) -> Self {
        GatewayError {
            kind,
            attempts,
            message: message.into(),
        }
    }
}

/// A model the pipelines can query. Implementations must be safe to call
/// from several workers at once.
pub trait ModelBackend: Send + Sync {
    fn complete(&self, request: &ModelRequest) -> Result<Completion, GatewayError>;

    /// Short label used in reports.
    fn label(&self) -> String;
}

impl fmt::Debug for dyn ModelBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ModelBackend({})", self.label())
    }
}

/// Builds the backend described by a validated config.
pub fn connect(config: &BackendConfig) -> Result<Arc<dyn ModelBackend>, ConfigError> {
    config.validate()?;
    Ok(match config {
        BackendConfig::HttpApi(c) => Arc::new(http::HttpBackend::new(c.clone())),
        BackendConfig::Oracle(c) => Arc::new(local::OracleBackend::new(c.clone())),
        BackendConfig::Noisy(c) => Arc::new(local::NoisyBackend::new(c.clone())),
        BackendConfig::Scripted(c) => Arc::new(local::ScriptedBackend::new(c.clone())),
    })
}

pub fn complete(request: &ModelRequest, backend: &dyn ModelBackend) -> Result<Completion, GatewayError> {
    request.validate()?;
    backend.complete(request)
}
