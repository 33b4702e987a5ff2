//! Remote chat-completion backends with retry, backoff and rate limiting.

use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde_json::{json, Value};

use super::{
    Completion, GatewayError, GatewayErrorKind, HttpApiConfig, ModelBackend, ModelRequest, Part,
    Provider, RateLimiter,
};

const ANTHROPIC_VERSION: &str = "2023-06-01";

pub struct HttpBackend {
    config: HttpApiConfig,
    agent: ureq::Agent,
    limiter: Arc<RateLimiter>,
}

/// Wire form of one request: where to send it and what.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Value,
}

impl HttpBackend {
    pub fn new(config: HttpApiConfig) -> Self {
        let limiter = Arc::new(RateLimiter::per_minute(config.rate_limit.max(1) as usize));
        HttpBackend::with_limiter(config, limiter)
    }

    pub fn with_limiter(config: HttpApiConfig, limiter: Arc<RateLimiter>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        HttpBackend {
            config,
            agent,
            limiter,
        }
    }

    fn api_key(&self) -> Result<String, GatewayError> {
        match std::env::var(&self.config.auth_env) {
            Ok(k) if !k.trim().is_empty() => Ok(k),
            _ => Err(GatewayError::new(
                GatewayErrorKind::Auth,
                0,
                format!("environment variable {} is not set", self.config.auth_env),
            )),
        }
    }
}

fn text_and_images(request: &ModelRequest) -> Result<Vec<EncodedPart>, GatewayError> {
    request
        .parts
        .iter()
        .map(|p| match p {
            Part::Text(t) => Ok(EncodedPart::Text(t.clone())),
            Part::Image(img) => Ok(EncodedPart::Image {
                mime: img.media_type.mime(),
                data: BASE64.encode(img.load()?),
            }),
        })
        .collect()
}

enum EncodedPart {
    Text(String),
    Image { mime: &'static str, data: String },
}

/// Builds the provider-specific request.
pub fn encode(config: &HttpApiConfig, request: &ModelRequest, api_key: &str) -> Result<Encoded, GatewayError> {
    let parts = text_and_images(request)?;
    let g = &request.generation;
    Ok(match config.provider {
        Provider::Openai => {
            let content: Vec<Value> = parts
                .iter()
                .map(|p| match p {
                    EncodedPart::Text(t) => json!({"type": "text", "text": t}),
                    EncodedPart::Image { mime, data } => json!({
                        "type": "image_url",
                        "image_url": {"url": format!("data:{mime};base64,{data}")}
                    }),
                })
                .collect();
            let mut body = json!({
                "model": config.model_id,
                "messages": [{"role": "user", "content": content}],
                "max_tokens": g.max_output_tokens,
                "temperature": g.temperature,
            });
            if let Some(seed) = g.seed {
                body["seed"] = json!(seed);
            }
            Encoded {
                url: config.endpoint.clone(),
                headers: vec![("Authorization".into(), format!("Bearer {api_key}"))],
                body,
            }
        }
        Provider::Anthropic => {
            let content: Vec<Value> = parts
                .iter()
                .map(|p| match p {
                    EncodedPart::Text(t) => json!({"type": "text", "text": t}),
                    EncodedPart::Image { mime, data } => json!({
                        "type": "image",
                        "source": {"type": "base64", "media_type": mime, "data": data}
                    }),
                })
                .collect();
            Encoded {
                url: config.endpoint.clone(),
                headers: vec![
                    ("x-api-key".into(), api_key.to_string()),
                    ("anthropic-version".into(), ANTHROPIC_VERSION.into()),
                ],
                body: json!({
                    "model": config.model_id,
                    "max_tokens": g.max_output_tokens,
                    "temperature": g.temperature,
                    "messages": [{"role": "user", "content": content}],
                }),
            }
        }
        Provider::Gemini => {
            let content: Vec<Value> = parts
                .iter()
                .map(|p| match p {
                    EncodedPart::Text(t) => json!({"text": t}),
                    EncodedPart::Image { mime, data } => {
                        json!({"inline_data": {"mime_type": mime, "data": data}})
                    }
                })
                .collect();
            let mut generation = json!({
                "maxOutputTokens": g.max_output_tokens,
                "temperature": g.temperature,
            });
            if let Some(seed) = g.seed {
                generation["seed"] = json!(seed);
            }
            Encoded {
                url: format!(
                    "{}/models/{}:generateContent",
                    config.endpoint.trim_end_matches('/'),
                    config.model_id
                ),
                headers: vec![("x-goog-api-key".into(), api_key.to_string())],
                body: json!({
                    "contents": [{"role": "user", "parts": content}],
                    "generationConfig": generation,
                }),
            }
        }
    })
}

/// Extracts the response text; `None` when the body has an unexpected shape.
pub fn decode(provider: Provider, body: &Value) -> Option<String> {
    let texts: Vec<&str> = match provider {
        Provider::Openai => vec![body["choices"][0]["message"]["content"].as_str()?],
        Provider::Anthropic => body["content"]
            .as_array()?
            .iter()
            .filter(|b| b["type"] == "text")
            .filter_map(|b| b["text"].as_str())
            .collect(),
        Provider::Gemini => body["candidates"][0]["content"]["parts"]
            .as_array()?
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect(),
    };
    if texts.is_empty() {
        return None;
    }
    Some(texts.concat())
}

enum Attempt {
    Done(String),
    Retry(GatewayErrorKind, String, Option<Duration>),
    Fatal(GatewayErrorKind, String),
}

impl HttpBackend {
    fn attempt(&self, encoded: &Encoded) -> Attempt {
        let mut req = self.agent.post(&encoded.url);
        for (k, v) in &encoded.headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let mut resp = match req.send_json(&encoded.body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(GatewayErrorKind::Transport, e.to_string(), None),
        };
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs)
            .filter(|d| *d <= Duration::from_secs(60));
        let body = resp.body_mut().read_to_string().unwrap_or_default();
        match status {
            200..=299 => match serde_json::from_str::<Value>(&body)
                .ok()
                .and_then(|v| decode(self.config.provider, &v))
            {
                Some(text) => Attempt::Done(text),
                None => Attempt::Fatal(
                    GatewayErrorKind::MalformedResponse,
                    format!("unexpected response body: {}", truncate(&body)),
                ),
            },
            401 | 403 => Attempt::Fatal(GatewayErrorKind::Auth, format!("HTTP {status}: {}", truncate(&body))),
            429 => Attempt::Retry(GatewayErrorKind::RateLimited, format!("HTTP 429: {}", truncate(&body)), retry_after),
            500..=599 => Attempt::Retry(GatewayErrorKind::Transport, format!("HTTP {status}: {}", truncate(&body)), retry_after),
            _ => Attempt::Fatal(GatewayErrorKind::Transport, format!("HTTP {status}: {}", truncate(&body))),
        }
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

impl ModelBackend for HttpBackend {
    fn complete(&self, request: &ModelRequest) -> Result<Completion, GatewayError> {
        request.validate()?;
        let key = self.api_key()?;
        let encoded = encode(&self.config, request, &key)?;
        let started = Instant::now();
        let max = self.config.retries.max_attempts.max(1);
        let mut last = (GatewayErrorKind::Transport, String::new());
        for attempt in 1..=max {
            self.limiter.acquire();
            match self.attempt(&encoded) {
                Attempt::Done(text) => {
                    return Ok(Completion {
                        text,
                        attempts: attempt,
                        latency: started.elapsed(),
                    })
                }
                Attempt::Fatal(kind, msg) => return Err(GatewayError::new(kind, attempt, msg)),
                Attempt::Retry(kind, msg, after) => {
                    last = (kind, msg);
                    if attempt < max {
                        thread::sleep(after.unwrap_or_else(|| self.config.retries.delay(attempt - 1)));
                    }
                }
            }
        }
        Err(GatewayError::new(last.0, max, last.1))
    }

    fn label(&self) -> String {
        self.config.model_id.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ImageData, ImagePart, MediaType};

    fn config(provider: Provider) -> HttpApiConfig {
        HttpApiConfig {
            provider,
            endpoint: "http://localhost:1/v1".into(),
            model_id: "m".into(),
            auth_env: "NEUROGROUND_TEST_UNSET_KEY".into(),
            rate_limit: 60,
            retries: Default::default(),
            timeout_secs: 5,
        }
    }

    fn request() -> ModelRequest {
        let mut r = ModelRequest::text("hello");
        r.parts.push(Part::Image(ImagePart {
            data: ImageData::Bytes(vec![1, 2, 3]),
            media_type: MediaType::Png,
        }));
        r
    }

    #[test]
    fn openai_encoding_attaches_data_urls() {
        let e = encode(&config(Provider::Openai), &request(), "k").unwrap();
        assert_eq!(e.body["messages"][0]["content"][1]["image_url"]["url"], "data:image/png;base64,AQID");
        assert_eq!(e.headers[0].1, "Bearer k");
    }

    #[test]
    fn anthropic_and_gemini_encodings() {
        let e = encode(&config(Provider::Anthropic), &request(), "k").unwrap();
        assert_eq!(e.body["messages"][0]["content"][1]["source"]["data"], "AQID");
        let e = encode(&config(Provider::Gemini), &request(), "k").unwrap();
        assert_eq!(e.url, "http://localhost:1/v1/models/m:generateContent");
        assert_eq!(e.body["contents"][0]["parts"][1]["inline_data"]["mime_type"], "image/png");
    }

    #[test]
    fn decoders() {
        let v = json!({"choices": [{"message": {"content": "hi"}}]});
        assert_eq!(decode(Provider::Openai, &v).as_deref(), Some("hi"));
        let v = json!({"content": [{"type": "text", "text": "a"}, {"type": "text", "text": "b"}]});
        assert_eq!(decode(Provider::Anthropic, &v).as_deref(), Some("ab"));
        let v = json!({"candidates": [{"content": {"parts": [{"text": "g"}]}}]});
        assert_eq!(decode(Provider::Gemini, &v).as_deref(), Some("g"));
        assert_eq!(decode(Provider::Openai, &json!({})), None);
    }

    #[test]
    fn missing_key_fails_before_network() {
        let backend = HttpBackend::new(config(Provider::Openai));
        let err = backend.complete(&ModelRequest::text("x")).unwrap_err();
        assert_eq!(err.kind, GatewayErrorKind::Auth);
        assert_eq!(err.attempts, 0);
    }
}
