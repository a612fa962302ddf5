//! Chat-completion backends: a scripted mock and an OpenAI-compatible HTTP client.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use geomatch_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::prompt::{ChatMessage, GenerationParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Classify,
    Review,
    Refine,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Classify => "classify",
            Stage::Review => "review",
            Stage::Refine => "refine",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionRequest {
    pub pair_id: String,
    pub stage: Stage,
    pub messages: Vec<ChatMessage>,
    pub params: GenerationParams,
}

impl CompletionRequest {
    /// Stable hex digest of the messages, used to key mock scripts.
    pub fn prompt_hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.messages).expect("messages serialize");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("credential rejected (HTTP {status}): {message}")]
    Credential { status: u16, message: String },
    #[error("gave up after {attempts} attempts (last status {last_status:?}): {message}")]
    Exhausted {
        attempts: u32,
        last_status: Option<u16>,
        message: String,
    },
    #[error("request failed (HTTP {status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("no mock response for pair {pair_id} ({stage})")]
    Unscripted { pair_id: String, stage: Stage },
}

impl BackendError {
    /// Errors that make further requests pointless.
    pub fn is_fatal(&self) -> bool {
        matches!(self, BackendError::Credential { .. })
    }
}

pub trait ChatBackend: Send + Sync {
    fn id(&self) -> String;
    fn complete(&self, request: &CompletionRequest) -> std::result::Result<Completion, BackendError>;
}

type Responder = dyn Fn(&CompletionRequest) -> Option<String> + Send + Sync;

/// Scripted backend. Lookup order: `"{pair_id}#{stage}"`, `pair_id`,
/// `"sha256:{prompt_hash}"`, then `"*"`. Latency is always reported as 0.
pub struct MockBackend {
    script: BTreeMap<String, String>,
    responder: Option<Box<Responder>>,
    calls: Mutex<Vec<(String, Stage)>>,
}

impl MockBackend {
    pub fn new(script: BTreeMap<String, String>) -> Self {
        MockBackend {
            script,
            responder: None,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn constant(text: impl Into<String>) -> Self {
        Self::new([("*".to_string(), text.into())].into_iter().collect())
    }

    /// Responses computed from the request; `None` means unscripted.
    pub fn from_fn(f: impl Fn(&CompletionRequest) -> Option<String> + Send + Sync + 'static) -> Self {
        MockBackend {
            script: BTreeMap::new(),
            responder: Some(Box::new(f)),
            calls: Mutex::new(Vec::new()),
        }
    }

    /// A JSON object mapping keys to response text.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("mock script {}: {e}", path.display())))?;
        let script: BTreeMap<String, String> = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("mock script {}: {e}", path.display())))?;
        Ok(Self::new(script))
    }

    /// `(pair_id, stage)` of every request received, in arrival order.
    pub fn calls(&self) -> Vec<(String, Stage)> {
        self.calls.lock().expect("call log lock").clone()
    }
}

impl ChatBackend for MockBackend {
    fn id(&self) -> String {
        "mock".into()
    }

    fn complete(&self, request: &CompletionRequest) -> std::result::Result<Completion, BackendError> {
        self.calls
            .lock()
            .expect("call log lock")
            .push((request.pair_id.clone(), request.stage));
        let text = match &self.responder {
            Some(f) => f(request),
            None => [
                format!("{}#{}", request.pair_id, request.stage),
                request.pair_id.clone(),
                format!("sha256:{}", request.prompt_hash()),
                "*".to_string(),
            ]
            .iter()
            .find_map(|k| self.script.get(k).cloned()),
        };
        text.map(|text| Completion { text, latency_ms: 0 })
            .ok_or_else(|| BackendError::Unscripted {
                pair_id: request.pair_id.clone(),
                stage: request.stage,
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    /// Base URL up to the API version, e.g. `https://host/v1`.
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub backoff_factor: f64,
    pub timeout: Duration,
    /// Minimum spacing between requests.
    pub min_interval: Option<Duration>,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpConfig {
            base_url: base_url.into(),
            api_key: None,
            model: model.into(),
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            backoff_factor: 2.0,
            timeout: Duration::from_secs(120),
            min_interval: None,
        }
    }

    /// Reads `LLM_API_BASE`, `LLM_MODEL` and the optional `LLM_API_KEY`.
    pub fn from_env() -> Result<Self> {
        let var = |name: &str| std::env::var(name).ok().filter(|v| !v.is_empty());
        let base = var("LLM_API_BASE").ok_or_else(|| Error::Config("LLM_API_BASE is not set".into()))?;
        let model = var("LLM_MODEL").ok_or_else(|| Error::Config("LLM_MODEL is not set".into()))?;
        let mut cfg = Self::new(base, model);
        cfg.api_key = var("LLM_API_KEY");
        Ok(cfg)
    }
}

pub struct HttpBackend {
    cfg: HttpConfig,
    client: reqwest::blocking::Client,
    next_slot: Mutex<Instant>,
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Result<Self> {
        if cfg.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be >= 1".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(HttpBackend {
            cfg,
            client,
            next_slot: Mutex::new(Instant::now()),
        })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'))
    }

    fn wait_for_slot(&self) {
        let Some(interval) = self.cfg.min_interval else { return };
        let wait = {
            let mut slot = self.next_slot.lock().expect("rate limit lock");
            let now = Instant::now();
            let start = (*slot).max(now);
            *slot = start + interval;
            start - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }

    fn body(&self, request: &CompletionRequest) -> serde_json::Value {
        json!({
            "model": self.cfg.model,
            "messages": request.messages,
            "temperature": request.params.temperature,
            "top_p": request.params.top_p,
            "max_tokens": request.params.max_new_tokens,
        })
    }
}

/// Outcome of one HTTP attempt.
enum Attempt {
    Done(String),
    Retry(Option<u16>, String),
    Fail(BackendError),
}

impl HttpBackend {
    fn attempt(&self, body: &serde_json::Value) -> Attempt {
        let mut req = self.client.post(self.endpoint()).json(body);
        if let Some(key) = &self.cfg.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(None, e.to_string()),
        };
        let status = resp.status().as_u16();
        let text = resp.text().unwrap_or_default();
        match status {
            200..=299 => {}
            401 | 403 => {
                return Attempt::Fail(BackendError::Credential {
                    status,
                    message: snippet(&text),
                })
            }
            429 | 500..=599 => return Attempt::Retry(Some(status), snippet(&text)),
            _ => {
                return Attempt::Fail(BackendError::Rejected {
                    status,
                    message: snippet(&text),
                })
            }
        }
        let parsed: serde_json::Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => return Attempt::Fail(BackendError::Malformed(e.to_string())),
        };
        match parsed["choices"][0]["message"]["content"].as_str() {
            Some(content) => Attempt::Done(content.to_string()),
            None => Attempt::Fail(BackendError::Malformed(
                "missing choices[0].message.content".into(),
            )),
        }
    }
}

fn snippet(text: &str) -> String {
    text.chars().take(200).collect()
}

impl ChatBackend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.cfg.model)
    }

    fn complete(&self, request: &CompletionRequest) -> std::result::Result<Completion, BackendError> {
        let body = self.body(request);
        let started = Instant::now();
        let mut delay = self.cfg.base_delay;
        let mut last = (None, String::new());
        for attempt in 1..=self.cfg.max_attempts {
            self.wait_for_slot();
            match self.attempt(&body) {
                Attempt::Done(text) => {
                    return Ok(Completion {
                        text,
                        latency_ms: started.elapsed().as_millis() as u64,
                    })
                }
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(status, message) => {
                    log::warn!(
                        "pair {} attempt {attempt}/{} failed (status {status:?}): {message}",
                        request.pair_id,
                        self.cfg.max_attempts
                    );
                    last = (status, message);
                    if attempt < self.cfg.max_attempts {
                        std::thread::sleep(delay);
                        delay = delay.mul_f64(self.cfg.backoff_factor);
                    }
                }
            }
        }
        Err(BackendError::Exhausted {
            attempts: self.cfg.max_attempts,
            last_status: last.0,
            message: last.1,
        })
    }
}
