//! Single chokepoint for every model call.
//!
//! A [`Gateway`] wraps a [`Backend`] with capability checks, a bounded
//! number of in-flight requests, the transcript cache and structured-output
//! parsing with repair re-prompts.

mod cache;
mod mock;
mod openai;
mod structured;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{Transcript, TranscriptCache};
pub use mock::{FnBackend, Matcher, MockScript, ScriptEntry, ScriptedMock};
pub use openai::{OpenAiBackend, ENV_API_BASE, ENV_API_KEY, ENV_MODEL};
pub use structured::{extract_json, SchemaValidator};

pub const DEFAULT_MAX_REPAIRS: usize = 2;
pub const DEFAULT_PARALLELISM: usize = 4;
const DEFAULT_MAX_TOKENS: u32 = 2048;

/// PNG image attached to a prompt, identified by the SHA-256 of its bytes.
#[derive(Clone)]
pub struct ImageRef {
    png: Arc<[u8]>,
    digest: String,
    width: u32,
    height: u32,
}

impl ImageRef {
    pub fn from_png(bytes: Vec<u8>) -> Result<Self, GatewayError> {
        let reader = image::ImageReader::new(std::io::Cursor::new(&bytes))
            .with_guessed_format()
            .map_err(|e| GatewayError::InvalidPrompt(format!("unreadable image: {e}")))?;
        let (width, height) = reader
            .into_dimensions()
            .map_err(|e| GatewayError::InvalidPrompt(format!("undecodable image: {e}")))?;
        Ok(Self {
            digest: sha256_hex(&bytes),
            png: bytes.into(),
            width,
            height,
        })
    }

    pub fn from_rgb(img: &image::RgbImage) -> Self {
        Self::from_png(crate::chartgen::encode_png(img)).expect("freshly encoded png decodes")
    }

    pub fn bytes(&self) -> &[u8] {
        &self.png
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }
}

impl fmt::Debug for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ImageRef({}x{}, sha256={})", self.width, self.height, &self.digest[..12])
    }
}

#[derive(Debug, Clone)]
pub enum Part {
    Text(String),
    Image(ImageRef),
}

#[derive(Debug, Clone)]
pub struct Prompt {
    pub system: String,
    pub parts: Vec<Part>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Per-call model override; `None` uses the backend default.
    pub model: Option<String>,
}

impl Prompt {
    pub fn new(system: impl Into<String>) -> Self {
        Self {
            system: system.into(),
            parts: Vec::new(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            model: None,
        }
    }

    pub fn text(mut self, text: impl Into<String>) -> Self {
        self.parts.push(Part::Text(text.into()));
        self
    }

    pub fn image(mut self, image: ImageRef) -> Self {
        self.parts.push(Part::Image(image));
        self
    }

    pub fn model(mut self, model: Option<String>) -> Self {
        self.model = model;
        self
    }

    pub fn has_images(&self) -> bool {
        self.parts.iter().any(|p| matches!(p, Part::Image(_)))
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.parts.is_empty() {
            return Err(GatewayError::InvalidPrompt("prompt has no user parts".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(GatewayError::InvalidPrompt("temperature must be >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidPrompt("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Flat text rendering used by mock matchers; images appear as
    /// `<image sha256=...>` placeholders.
    pub fn render(&self) -> String {
        let mut out = self.system.clone();
        for part in &self.parts {
            out.push_str("\n\n");
            match part {
                Part::Text(t) => out.push_str(t),
                Part::Image(img) => out.push_str(&format!("<image sha256={}>", img.digest)),
            }
        }
        out
    }

    /// Cache key: content hash of backend identity and every prompt field.
    pub fn cache_key(&self, backend: &str) -> String {
        #[derive(Serialize)]
        #[serde(rename_all = "snake_case")]
        enum KeyPart<'a> {
            Text(&'a str),
            Image(&'a str),
        }
        #[derive(Serialize)]
        struct KeyMaterial<'a> {
            backend: &'a str,
            model: Option<&'a str>,
            system: &'a str,
            parts: Vec<KeyPart<'a>>,
            temperature: f64,
            max_tokens: u32,
        }
        let material = KeyMaterial {
            backend,
            model: self.model.as_deref(),
            system: &self.system,
            parts: self
                .parts
                .iter()
                .map(|p| match p {
                    Part::Text(t) => KeyPart::Text(t),
                    Part::Image(i) => KeyPart::Image(&i.digest),
                })
                .collect(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        };
        sha256_hex(&serde_json::to_vec(&material).expect("key material serializes"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub vision: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("mock has no entry matching prompt: {0}")]
    MockMiss(String),
    #[error("backend is offline")]
    Offline,
}

/// A model endpoint: text and images in, text out.
pub trait Backend: Send + Sync {
    fn identity(&self) -> &str;
    fn capabilities(&self) -> Capabilities;
    fn complete(&self, prompt: &Prompt) -> Result<String, BackendError>;
}

/// Stand-in backend for replays: has an identity (so cache keys line up)
/// but refuses every live call.
pub struct OfflineBackend {
    identity: String,
    capabilities: Capabilities,
}

impl OfflineBackend {
    pub fn new(identity: impl Into<String>, vision: bool) -> Self {
        Self { identity: identity.into(), capabilities: Capabilities { vision } }
    }
}

impl Backend for OfflineBackend {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn capabilities(&self) -> Capabilities {
        self.capabilities
    }

    fn complete(&self, _prompt: &Prompt) -> Result<String, BackendError> {
        Err(BackendError::Offline)
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend '{backend}' does not accept images")]
    Capability { backend: String },
    #[error("mock miss: {0}")]
    MockMiss(String),
    #[error("cache miss for transcript key {key}")]
    CacheMiss { key: String },
    #[error("structured output invalid after {} attempts: {last_error}", attempts.len())]
    StructuredOutputExhausted { attempts: Vec<String>, last_error: String },
    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("transcript cache: {0}")]
    Cache(String),
}

impl GatewayError {
    /// True for failures that originate with the model or its transport, as
    /// opposed to replay/configuration problems that must surface.
    pub fn is_model_failure(&self) -> bool {
        matches!(
            self,
            GatewayError::Transport(_)
                | GatewayError::MockMiss(_)
                | GatewayError::StructuredOutputExhausted { .. }
        )
    }
}

#[derive(Debug, Clone)]
pub struct Completion {
    pub text: String,
    pub key: String,
    pub from_cache: bool,
}

#[derive(Debug, Clone)]
pub struct Structured<T> {
    pub value: T,
    /// Transcript keys of every attempt, in order.
    pub keys: Vec<String>,
}

struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    fn new(max: usize) -> Self {
        Self { max: max.max(1), in_flight: Mutex::new(0), freed: Condvar::new() }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut n = self.in_flight.lock().expect("limiter lock");
        while *n >= self.max {
            n = self.freed.wait(n).expect("limiter lock");
        }
        *n += 1;
        LimiterGuard(self)
    }
}

struct LimiterGuard<'a>(&'a Limiter);

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().expect("limiter lock");
        *n -= 1;
        self.0.freed.notify_one();
    }
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    cache: Option<TranscriptCache>,
    offline: bool,
    limiter: Limiter,
    backend_calls: AtomicUsize,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self {
            backend,
            cache: None,
            offline: false,
            limiter: Limiter::new(DEFAULT_PARALLELISM),
            backend_calls: AtomicUsize::new(0),
        }
    }

    pub fn with_cache(mut self, cache: TranscriptCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_parallelism(mut self, max_in_flight: usize) -> Self {
        self.limiter = Limiter::new(max_in_flight);
        self
    }

    /// Serve everything from the cache; misses become [`GatewayError::CacheMiss`].
    pub fn offline(mut self) -> Self {
        self.offline = true;
        self
    }

    pub fn backend_identity(&self) -> &str {
        self.backend.identity()
    }

    pub fn parallelism(&self) -> usize {
        self.limiter.max
    }

    /// Number of calls that actually reached the backend.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn cache(&self) -> Option<&TranscriptCache> {
        self.cache.as_ref()
    }

    fn fetch(&self, prompt: &Prompt) -> Result<Completion, GatewayError> {
        prompt.validate()?;
        if prompt.has_images() && !self.backend.capabilities().vision {
            return Err(GatewayError::Capability { backend: self.backend.identity().to_string() });
        }
        let key = prompt.cache_key(self.backend.identity());
        match self.cache.as_ref().and_then(|c| c.lookup(&key)) {
            Some(Ok(text)) => return Ok(Completion { text, key, from_cache: true }),
            Some(Err(recorded)) => return Err(replayed_failure(&recorded)),
            None => {}
        }
        if self.offline {
            return Err(GatewayError::CacheMiss { key });
        }
        let text = {
            let _slot = self.limiter.acquire();
            self.backend_calls.fetch_add(1, Ordering::SeqCst);
            self.backend.complete(prompt)
        };
        let text = match text {
            Ok(text) => text,
            Err(BackendError::Offline) => return Err(GatewayError::CacheMiss { key }),
            Err(e) => {
                // Model failures are recorded so a replay fails the same way.
                if let Some(cache) = &self.cache {
                    cache
                        .insert(Transcript::failure(&key, &e.to_string()))
                        .map_err(|e| GatewayError::Cache(e.to_string()))?;
                }
                return Err(match e {
                    BackendError::MockMiss(m) => GatewayError::MockMiss(m),
                    BackendError::Transport(m) => GatewayError::Transport(m),
                    BackendError::Offline => unreachable!("handled above"),
                });
            }
        };
        Ok(Completion { text, key, from_cache: false })
    }

    fn record(&self, completion: &Completion, parsed_ok: bool) -> Result<(), GatewayError> {
        match &self.cache {
            Some(cache) if !completion.from_cache => cache
                .insert(Transcript::new(&completion.key, &completion.text, parsed_ok))
                .map_err(|e| GatewayError::Cache(e.to_string())),
            _ => Ok(()),
        }
    }

    /// Raw text completion.
    pub fn complete(&self, prompt: &Prompt) -> Result<Completion, GatewayError> {
        let completion = self.fetch(prompt)?;
        self.record(&completion, true)?;
        Ok(completion)
    }

    /// Completion parsed by `parse`; on failure the original prompt is
    /// re-sent with the error appended, at most `max_repairs` times.
    pub fn complete_parsed<T>(
        &self,
        prompt: &Prompt,
        max_repairs: usize,
        repair_instruction: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Structured<T>, GatewayError> {
        let mut attempts = Vec::new();
        let mut keys = Vec::new();
        let mut last_error = String::new();
        for attempt in 0..=max_repairs {
            let current = if attempt == 0 {
                prompt.clone()
            } else {
                repair_prompt(prompt, attempt, &last_error, repair_instruction)
            };
            let completion = self.fetch(&current)?;
            let parsed = parse(&completion.text);
            self.record(&completion, parsed.is_ok())?;
            keys.push(completion.key.clone());
            match parsed {
                Ok(value) => return Ok(Structured { value, keys }),
                Err(err) => {
                    log::debug!("attempt {} failed validation: {err}", attempt + 1);
                    last_error = err;
                    attempts.push(completion.text);
                }
            }
        }
        Err(GatewayError::StructuredOutputExhausted { attempts, last_error })
    }

    /// JSON completion validated against `schema` and deserialized into `T`.
    pub fn complete_structured<T: DeserializeOwned>(
        &self,
        prompt: &Prompt,
        schema: &serde_json::Value,
        max_repairs: usize,
    ) -> Result<Structured<T>, GatewayError> {
        let validator = SchemaValidator::new(schema)?;
        self.complete_parsed(
            prompt,
            max_repairs,
            "Emit only valid JSON matching the schema.",
            |raw| validator.parse::<T>(raw),
        )
    }
}

fn replayed_failure(recorded: &str) -> GatewayError {
    if let Some(m) = recorded.strip_prefix("mock has no entry matching prompt: ") {
        GatewayError::MockMiss(m.to_string())
    } else {
        GatewayError::Transport(recorded.strip_prefix("transport error: ").unwrap_or(recorded).to_string())
    }
}

/// Original prompt, a delimiter naming the attempt, then the failure.
fn repair_prompt(original: &Prompt, attempt: usize, error: &str, instruction: &str) -> Prompt {
    let mut p = original.clone();
    p.parts.push(Part::Text(format!(
        "--- repair attempt {attempt} ---\nYour previous output failed validation: {error}. {instruction}"
    )));
    p
}
