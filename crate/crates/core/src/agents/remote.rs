//! Chat-completion backend for real vision-language models.
//!
//! Requests use the OpenAI-style `messages` array with a text part followed by
//! `image_url` parts carrying base64 PNG data URLs. Transport errors, 429 and
//! 5xx responses are retried with exponential backoff.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{rescale_point, AgentError, AgentImage, LocatorAgent, ScannerAgent};
use crate::geometry::{ImageSize, PointPx};
use crate::protocol::{parse_point, render_prompt, LocatorStyle, PromptContext, PromptKind, Stage, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: Option<u32>,
    pub max_retries: u32,
    pub timeout_secs: f64,
    pub backoff_base_ms: u64,
    /// Requests per second; `None` means unlimited.
    pub rate_limit_per_sec: Option<f64>,
    /// Images above this many pixels are downscaled before sending.
    pub max_image_pixels: Option<u64>,
    /// Locator prompt format.
    pub locator_style: LocatorStyle,
    /// When set, the locator replies in coordinates normalized to
    /// `[0, coordinate_range)` rather than pixels.
    pub coordinate_range: Option<u32>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self::scanner_defaults()
    }
}

impl BackendConfig {
    /// Sampling defaults for the generalist: temperature 0.7, top-p 0.95.
    pub fn scanner_defaults() -> Self {
        Self {
            endpoint: "https://openrouter.ai/api/v1/chat/completions".into(),
            model: "google/gemini-2.0-flash-001".into(),
            api_key_env: "OPENROUTER_API_KEY".into(),
            temperature: 0.7,
            top_p: 0.95,
            max_tokens: None,
            max_retries: 3,
            timeout_secs: 120.0,
            backoff_base_ms: 500,
            rate_limit_per_sec: None,
            max_image_pixels: Some(4_000_000),
            locator_style: LocatorStyle::default(),
            coordinate_range: None,
        }
    }

    /// Deterministic decoding for the grounding specialist.
    pub fn locator_defaults() -> Self {
        Self {
            temperature: 0.0,
            top_p: 1.0,
            ..Self::scanner_defaults()
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.endpoint.trim().is_empty() {
            return Err(AgentError::Config("endpoint is empty".into()));
        }
        if self.model.trim().is_empty() {
            return Err(AgentError::Config("model is empty".into()));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(AgentError::Config("timeout_secs must be positive".into()));
        }
        if matches!(self.rate_limit_per_sec, Some(r) if !(r > 0.0 && r.is_finite())) {
            return Err(AgentError::Config("rate_limit_per_sec must be positive".into()));
        }
        Ok(())
    }

    pub fn api_key(&self) -> Result<String, AgentError> {
        match std::env::var(&self.api_key_env) {
            Ok(k) if !k.trim().is_empty() => Ok(k),
            _ => Err(AgentError::Config(format!(
                "environment variable {} is not set",
                self.api_key_env
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct TransportError(pub String);

/// Sends one JSON POST. Split out so tests can script responses.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: &str,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, AgentError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| AgentError::Config(e.to_string()))?;
        Ok(Self { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: &str,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError> {
        let resp = self
            .client
            .post(url)
            .bearer_auth(bearer)
            .timeout(timeout)
            .json(body)
            .send()
            .map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

/// Spaces requests at least `1 / rate` seconds apart across all callers.
pub struct RateLimiter {
    interval: Option<Duration>,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(per_sec: Option<f64>) -> Self {
        Self {
            interval: per_sec.map(|r| Duration::from_secs_f64(1.0 / r)),
            next_slot: Mutex::new(None),
        }
    }

    /// Reserves the next slot and returns how long the caller must wait.
    pub fn reserve(&self) -> Duration {
        let Some(interval) = self.interval else {
            return Duration::ZERO;
        };
        let now = Instant::now();
        let mut next = self.next_slot.lock().unwrap_or_else(|e| e.into_inner());
        let slot = next.map_or(now, |n| n.max(now));
        *next = Some(slot + interval);
        slot - now
    }

    pub fn acquire(&self) {
        let wait = self.reserve();
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

struct Client {
    config: BackendConfig,
    api_key: String,
    transport: Box<dyn Transport>,
    limiter: RateLimiter,
}

impl Client {
    fn new(config: BackendConfig, transport: Box<dyn Transport>) -> Result<Self, AgentError> {
        config.validate()?;
        let api_key = config.api_key()?;
        let limiter = RateLimiter::new(config.rate_limit_per_sec);
        Ok(Self {
            config,
            api_key,
            transport,
            limiter,
        })
    }

    fn request_body(&self, prompt: &str, images: &[String]) -> Value {
        let mut content = vec![json!({ "type": "text", "text": prompt })];
        content.extend(images.iter().map(|b64| {
            json!({
                "type": "image_url",
                "image_url": { "url": format!("data:image/png;base64,{b64}") }
            })
        }));
        let mut body = json!({
            "model": self.config.model,
            "messages": [{ "role": "user", "content": content }],
            "temperature": self.config.temperature,
            "top_p": self.config.top_p,
        });
        if let Some(max) = self.config.max_tokens {
            body["max_tokens"] = json!(max);
        }
        body
    }

    fn encode(&self, images: &[AgentImage<'_>]) -> Result<(Vec<String>, Vec<ImageSize>), AgentError> {
        let mut encoded = Vec::with_capacity(images.len());
        let mut sizes = Vec::with_capacity(images.len());
        for img in images {
            let (png, size) = img.to_png(self.config.max_image_pixels)?;
            encoded.push(BASE64.encode(png));
            sizes.push(size);
        }
        Ok((encoded, sizes))
    }

    fn send(&self, body: &Value) -> Result<String, AgentError> {
        let timeout = Duration::from_secs_f64(self.config.timeout_secs);
        let attempts = self.config.max_retries + 1;
        let mut last_status = None;
        let mut last_message = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let backoff = self.config.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(backoff));
            }
            self.limiter.acquire();
            match self.transport.post_json(&self.config.endpoint, &self.api_key, body, timeout) {
                Ok(resp) if (200..300).contains(&resp.status) => return extract_content(&resp.body),
                Ok(resp) if resp.status == 429 || resp.status >= 500 => {
                    last_status = Some(resp.status);
                    last_message = truncate(&resp.body);
                }
                Ok(resp) => {
                    return Err(AgentError::Rejected {
                        status: resp.status,
                        body: truncate(&resp.body),
                    })
                }
                Err(e) => {
                    last_message = e.0;
                }
            }
        }
        Err(AgentError::Exhausted {
            attempts,
            last_status,
            message: last_message,
        })
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(500).collect()
}

/// `choices[0].message.content`, as a string or a list of text parts.
fn extract_content(body: &str) -> Result<String, AgentError> {
    let v: Value = serde_json::from_str(body).map_err(|e| AgentError::Decode(e.to_string()))?;
    let content = &v["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join("")),
        _ => Err(AgentError::Decode(format!(
            "no message content in response: {}",
            truncate(body)
        ))),
    }
}

pub struct RemoteScanner {
    client: Client,
}

impl RemoteScanner {
    /// Fails if the API key variable is unset.
    pub fn new(config: BackendConfig) -> Result<Self, AgentError> {
        Self::with_transport(config, Box::new(ReqwestTransport::new()?))
    }

    pub fn with_transport(config: BackendConfig, transport: Box<dyn Transport>) -> Result<Self, AgentError> {
        Ok(Self {
            client: Client::new(config, transport)?,
        })
    }
}

impl ScannerAgent for RemoteScanner {
    fn complete(&self, prompt: &str, images: &[AgentImage<'_>]) -> Result<String, AgentError> {
        let (encoded, _) = self.client.encode(images)?;
        let body = self.client.request_body(prompt, &encoded);
        self.client.send(&body)
    }
}

pub struct RemoteLocator {
    client: Client,
}

impl RemoteLocator {
    pub fn new(config: BackendConfig) -> Result<Self, AgentError> {
        Self::with_transport(config, Box::new(ReqwestTransport::new()?))
    }

    pub fn with_transport(config: BackendConfig, transport: Box<dyn Transport>) -> Result<Self, AgentError> {
        Ok(Self {
            client: Client::new(config, transport)?,
        })
    }
}

impl LocatorAgent for RemoteLocator {
    fn ground(&self, instruction: &str, image: &AgentImage<'_>) -> Result<PointPx, AgentError> {
        let kind = PromptKind::new(Stage::LocatorGround(self.client.config.locator_style), Variant::Normal);
        let prompt = render_prompt(kind, &PromptContext::new(instruction))
            .map_err(|e| AgentError::Config(e.to_string()))?;
        let (encoded, sizes) = self.client.encode(std::slice::from_ref(image))?;
        let body = self.client.request_body(&prompt, &encoded);
        let reply = self.client.send(&body)?;
        let point = parse_point(&reply)?.value;
        let sent = match self.client.config.coordinate_range {
            Some(range) => ImageSize {
                width: range,
                height: range,
            },
            None => sizes[0],
        };
        let p = rescale_point(point, sent, image.size());
        Ok(image.size().rect().clamp_point(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::synth::BlankScreen;
    use std::collections::VecDeque;
    use std::sync::Arc;

    struct Scripted {
        replies: Mutex<VecDeque<Result<HttpResponse, TransportError>>>,
        bodies: Arc<Mutex<Vec<Value>>>,
    }

    impl Scripted {
        fn new(replies: Vec<Result<HttpResponse, TransportError>>) -> (Self, Arc<Mutex<Vec<Value>>>) {
            let bodies = Arc::new(Mutex::new(Vec::new()));
            (
                Self {
                    replies: Mutex::new(replies.into()),
                    bodies: bodies.clone(),
                },
                bodies,
            )
        }
    }

    impl Transport for Scripted {
        fn post_json(&self, _: &str, _: &str, body: &Value, _: Duration) -> Result<HttpResponse, TransportError> {
            self.bodies.lock().unwrap().push(body.clone());
            self.replies
                .lock()
                .unwrap()
                .pop_front()
                .unwrap_or_else(|| Err(TransportError("script exhausted".into())))
        }
    }

    fn ok(text: &str) -> Result<HttpResponse, TransportError> {
        Ok(HttpResponse {
            status: 200,
            body: json!({ "choices": [{ "message": { "content": text } }] }).to_string(),
        })
    }

    fn status(code: u16) -> Result<HttpResponse, TransportError> {
        Ok(HttpResponse {
            status: code,
            body: "unavailable".into(),
        })
    }

    fn config(env: &str) -> BackendConfig {
        std::env::set_var(env, "test-key");
        BackendConfig {
            api_key_env: env.into(),
            backoff_base_ms: 1,
            ..BackendConfig::scanner_defaults()
        }
    }

    #[test]
    fn retries_through_unavailable() {
        let (t, bodies) = Scripted::new(vec![status(503), status(503), ok("Region 1: 50")]);
        let scanner = RemoteScanner::with_transport(config("GS_TEST_KEY_A"), Box::new(t)).unwrap();
        let s = BlankScreen(ImageSize::new(64, 48).unwrap());
        let reply = scanner.complete("hi", &[AgentImage::full(&s)]).unwrap();
        assert_eq!(reply, "Region 1: 50");
        let bodies = bodies.lock().unwrap();
        assert_eq!(bodies.len(), 3);
        let content = &bodies[0]["messages"][0]["content"];
        assert_eq!(content[0]["text"], "hi");
        assert!(content[1]["image_url"]["url"]
            .as_str()
            .unwrap()
            .starts_with("data:image/png;base64,"));
        assert_eq!(bodies[0]["temperature"], 0.7);
        assert_eq!(bodies[0]["top_p"], 0.95);
    }

    #[test]
    fn exhausted_retries_report_last_status() {
        let mut cfg = config("GS_TEST_KEY_B");
        cfg.max_retries = 2;
        let (t, bodies) = Scripted::new(vec![status(502), status(503), status(500), ok("late")]);
        let scanner = RemoteScanner::with_transport(cfg, Box::new(t)).unwrap();
        match scanner.complete("hi", &[]) {
            Err(AgentError::Exhausted {
                attempts,
                last_status,
                ..
            }) => {
                assert_eq!(attempts, 3);
                assert_eq!(last_status, Some(500));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(bodies.lock().unwrap().len(), 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (t, bodies) = Scripted::new(vec![status(401), ok("never")]);
        let scanner = RemoteScanner::with_transport(config("GS_TEST_KEY_C"), Box::new(t)).unwrap();
        assert!(matches!(
            scanner.complete("hi", &[]),
            Err(AgentError::Rejected { status: 401, .. })
        ));
        assert_eq!(bodies.lock().unwrap().len(), 1);
    }

    #[test]
    fn missing_key_is_a_config_error() {
        let cfg = BackendConfig {
            api_key_env: "GS_TEST_KEY_SURELY_UNSET".into(),
            ..BackendConfig::scanner_defaults()
        };
        let (t, _) = Scripted::new(vec![]);
        assert!(matches!(
            RemoteScanner::with_transport(cfg, Box::new(t)),
            Err(AgentError::Config(_))
        ));
    }

    #[test]
    fn locator_rescales_from_downscaled_image() {
        let mut cfg = config("GS_TEST_KEY_D");
        cfg.temperature = 0.0;
        cfg.max_image_pixels = Some(400 * 300);
        // sent image is 400x300; the model answers in that frame
        let (t, bodies) = Scripted::new(vec![ok("(200, 150)"), ok("no numbers")]);
        let loc = RemoteLocator::with_transport(cfg, Box::new(t)).unwrap();
        let s = BlankScreen(ImageSize::new(1600, 1200).unwrap());
        let p = loc.ground("click save", &AgentImage::full(&s)).unwrap();
        assert_eq!(p, PointPx::new(800, 600));
        let prompt = bodies.lock().unwrap()[0]["messages"][0]["content"][0]["text"]
            .as_str()
            .unwrap()
            .to_string();
        assert!(prompt.ends_with("\"click save\""));
        assert!(matches!(
            loc.ground("click save", &AgentImage::full(&s)),
            Err(AgentError::LocatorParse(_))
        ));
    }

    #[test]
    fn normalized_coordinates() {
        let mut cfg = config("GS_TEST_KEY_E");
        cfg.coordinate_range = Some(1000);
        let (t, _) = Scripted::new(vec![ok("(500, 250)")]);
        let loc = RemoteLocator::with_transport(cfg, Box::new(t)).unwrap();
        let s = BlankScreen(ImageSize::new(2000, 800).unwrap());
        assert_eq!(loc.ground("x", &AgentImage::full(&s)).unwrap(), PointPx::new(1000, 200));
    }

    #[test]
    fn rate_limiter_spaces_slots() {
        let lim = RateLimiter::new(Some(10.0));
        assert_eq!(lim.reserve(), Duration::ZERO);
        let second = lim.reserve();
        let third = lim.reserve();
        assert!(second > Duration::from_millis(80) && second <= Duration::from_millis(100));
        assert!(third > Duration::from_millis(180));
        assert_eq!(RateLimiter::new(None).reserve(), Duration::ZERO);
    }

    #[test]
    fn content_parts_are_joined() {
        let body = json!({ "choices": [{ "message": { "content": [{"type": "text", "text": "a"}, {"type": "text", "text": "b"}] } }] });
        assert_eq!(extract_content(&body.to_string()).unwrap(), "ab");
        assert!(extract_content("{}").is_err());
    }
}
