//! Chat-completion style HTTP learner.
//!
//! Request body:
//! `{"model", "temperature", "messages": [{"role": "user", "content": [text part, image part?]}]}`
//! where the image part is `{"type": "image_url", "image_url": {"url": "data:image/png;base64,..."}}`.
//! The answer is the first text segment of `choices[0].message.content`, or of
//! a top-level `content` array for vendors that answer in that shape.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::RngCore;
use serde_json::{json, Value};

use super::prompt::{build_prompt, Prompt};
use super::{Learner, LearnerConfig, LearnerError, Query};

const MAX_BACKOFF: Duration = Duration::from_secs(30);

/// Token bucket shared by all threads using one learner.
#[derive(Debug)]
pub struct TokenBucket {
    rate: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(rate_per_sec: f64, capacity: f64) -> Self {
        Self {
            rate: rate_per_sec,
            capacity: capacity.max(1.0),
            state: Mutex::new((capacity.max(1.0), Instant::now())),
        }
    }

    /// Blocks until a token is available. A zero rate never blocks.
    pub fn acquire(&self) {
        if self.rate <= 0.0 {
            return;
        }
        loop {
            let wait = {
                let mut guard = self.state.lock().expect("rate limiter poisoned");
                let (tokens, last) = &mut *guard;
                let now = Instant::now();
                *tokens = (*tokens + now.duration_since(*last).as_secs_f64() * self.rate)
                    .min(self.capacity);
                *last = now;
                if *tokens >= 1.0 {
                    *tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - *tokens) / self.rate)
            };
            std::thread::sleep(wait);
        }
    }
}

pub struct RemoteLearner {
    name: String,
    model: String,
    url: String,
    api_key_env: Option<String>,
    auth_header: String,
    auth_scheme: String,
    max_retries: u32,
    base_delay: Duration,
    max_tokens: Option<u32>,
    system_prompt: Option<String>,
    agent: ureq::Agent,
    limiter: TokenBucket,
}

impl std::fmt::Debug for RemoteLearner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteLearner")
            .field("name", &self.name)
            .field("model", &self.model)
            .field("url", &self.url)
            .finish_non_exhaustive()
    }
}

enum Attempt {
    Done(String),
    Retry(String),
    Fatal(LearnerError),
}

impl RemoteLearner {
    pub fn from_config(cfg: &LearnerConfig) -> Result<Self, LearnerError> {
        cfg.validate()?;
        let endpoint = cfg
            .endpoint
            .as_deref()
            .ok_or_else(|| LearnerError::Config(format!("{}: remote learner needs `endpoint`", cfg.name)))?;
        let url = format!(
            "{}/{}",
            endpoint.trim_end_matches('/'),
            cfg.path.trim_start_matches('/')
        );
        let agent_cfg = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.request_timeout_secs)))
            .http_status_as_error(false)
            .build();
        Ok(Self {
            name: cfg.name.clone(),
            model: cfg.model.clone().unwrap_or_else(|| cfg.name.clone()),
            url,
            api_key_env: cfg.api_key_env.clone(),
            auth_header: cfg.auth_header.clone(),
            auth_scheme: cfg.auth_scheme.clone(),
            max_retries: cfg.max_retries,
            base_delay: Duration::from_millis(cfg.retry_base_delay_ms),
            max_tokens: cfg.max_tokens,
            system_prompt: cfg.system_prompt.clone(),
            agent: agent_cfg.into(),
            limiter: TokenBucket::new(cfg.rate_limit_per_sec, 1.0),
        })
    }

    /// Resolves the API key from the configured environment variable.
    pub fn credentials(&self) -> Result<Option<String>, LearnerError> {
        match &self.api_key_env {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(v) if !v.is_empty() => Ok(Some(v)),
                _ => Err(LearnerError::Config(format!(
                    "{}: environment variable `{var}` is not set",
                    self.name
                ))),
            },
        }
    }

    pub fn request_body(&self, prompt: &Prompt, temperature: f64) -> Value {
        let mut content = vec![json!({"type": "text", "text": prompt.text})];
        if let Some(img) = &prompt.image_base64 {
            content.push(json!({
                "type": "image_url",
                "image_url": {"url": format!("data:image/png;base64,{img}")}
            }));
        }
        let mut messages = Vec::new();
        if let Some(sys) = &self.system_prompt {
            messages.push(json!({"role": "system", "content": sys}));
        }
        messages.push(json!({"role": "user", "content": content}));
        let mut body = json!({
            "model": self.model,
            "temperature": temperature,
            "messages": messages,
        });
        if let Some(n) = self.max_tokens {
            body["max_tokens"] = json!(n);
        }
        body
    }

    fn attempt(&self, body: &Value, key: Option<&str>) -> Attempt {
        self.limiter.acquire();
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = key {
            let value = if self.auth_scheme.is_empty() {
                key.to_owned()
            } else {
                format!("{} {key}", self.auth_scheme)
            };
            req = req.header(self.auth_header.as_str(), value.as_str());
        }
        let mut resp = match req.send(body.to_string()) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        match status {
            200..=299 => match serde_json::from_str::<Value>(&text) {
                Ok(v) => match extract_answer(&v) {
                    Some(answer) => Attempt::Done(answer.trim().to_owned()),
                    None => Attempt::Fatal(LearnerError::Protocol(format!(
                        "no text segment in response: {}",
                        truncate(&text)
                    ))),
                },
                Err(e) => Attempt::Fatal(LearnerError::Protocol(format!("invalid JSON: {e}"))),
            },
            429 | 500..=599 => Attempt::Retry(format!("HTTP {status}: {}", truncate(&text))),
            _ => Attempt::Fatal(LearnerError::Protocol(format!(
                "HTTP {status}: {}",
                truncate(&text)
            ))),
        }
    }
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(200) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

fn first_text(content: &Value) -> Option<&str> {
    match content {
        Value::String(s) => Some(s),
        Value::Array(parts) => parts.iter().find_map(|p| match p {
            Value::String(s) => Some(s.as_str()),
            Value::Object(o) => o.get("text").and_then(Value::as_str),
            _ => None,
        }),
        _ => None,
    }
}

/// First text segment of a chat-completion or messages-style response.
pub fn extract_answer(v: &Value) -> Option<&str> {
    if let Some(content) = v.pointer("/choices/0/message/content") {
        return first_text(content);
    }
    v.get("content").and_then(first_text)
}

impl Learner for RemoteLearner {
    fn name(&self) -> &str {
        &self.name
    }

    fn identify(&self, query: &Query<'_>, _rng: &mut dyn RngCore) -> Result<String, LearnerError> {
        super::validate_temperature(query.temperature)?;
        let key = self.credentials()?;
        let body = self.request_body(&build_prompt(query.stimulus), query.temperature);
        let attempts = self.max_retries + 1;
        let mut last = String::new();
        for n in 1..=attempts {
            match self.attempt(&body, key.as_deref()) {
                Attempt::Done(answer) => return Ok(answer),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(msg) => {
                    log::warn!("{}: attempt {n}/{attempts} failed: {msg}", self.name);
                    last = msg;
                    if n < attempts {
                        let delay = self.base_delay.saturating_mul(1 << (n - 1).min(16));
                        std::thread::sleep(delay.min(MAX_BACKOFF));
                    }
                }
            }
        }
        Err(LearnerError::Transport {
            attempts,
            message: last,
        })
    }
}
