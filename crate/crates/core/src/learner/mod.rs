//! Learners: anything that maps a stimulus to a text answer.
//!
//! Concrete learners sit behind the [`Learner`] trait and are built by name
//! through a [`LearnerRegistry`], so an experiment config picks them at
//! runtime (`kind = "remote"`, `"oracle-deterministic"`, ...).

pub mod cache;
pub mod judge;
pub mod oracle;
pub mod prompt;
pub mod registry;
pub mod remote;

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::render::Stimulus;

pub use cache::{CacheKey, ResponseCache, TrialRecord};
pub use judge::{judge, normalize_answer, HyponymError, HyponymTable, Judgment};
pub use oracle::{oracle_identify, OracleLearner};
pub use prompt::{build_prompt, Prompt, PROMPT_TEMPLATE_VERSION};
pub use registry::LearnerRegistry;
pub use remote::RemoteLearner;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("learner configuration: {0}")]
    Config(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("unexpected response: {0}")]
    Protocol(String),
    #[error("response cache: {0}")]
    Cache(#[from] std::io::Error),
}

/// One question to a learner.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub stimulus: &'a Stimulus,
    pub temperature: f64,
}

pub trait Learner: Send + Sync {
    fn name(&self) -> &str;

    /// Returns the learner's answer, trimmed of surrounding whitespace.
    ///
    /// `rng` is the per-query generator; remote learners ignore it.
    fn identify(&self, query: &Query<'_>, rng: &mut dyn RngCore) -> Result<String, LearnerError>;
}

fn default_path() -> String {
    "/v1/chat/completions".into()
}
fn default_auth_header() -> String {
    "Authorization".into()
}
fn default_auth_scheme() -> String {
    "Bearer".into()
}
fn default_retries() -> u32 {
    3
}
fn default_timeout() -> f64 {
    60.0
}
fn default_backoff() -> u64 {
    500
}
fn default_rate() -> f64 {
    1.0
}
fn default_probability() -> f64 {
    1.0
}
fn default_temperature() -> f64 {
    0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    /// Label used in caches and reports.
    pub name: String,
    /// Registry key of the learner implementation.
    pub kind: String,
    /// Remote model identifier; defaults to `name`.
    #[serde(default)]
    pub model: Option<String>,
    /// Temperature for ad-hoc queries. Experiment phases use their own.
    #[serde(default = "default_temperature")]
    pub temperature: f64,

    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_path")]
    pub path: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_auth_header")]
    pub auth_header: String,
    /// Prefix before the key in the auth header; empty sends the bare key.
    #[serde(default = "default_auth_scheme")]
    pub auth_scheme: String,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: f64,
    #[serde(default = "default_backoff")]
    pub retry_base_delay_ms: u64,
    /// Requests per second; 0 disables limiting.
    #[serde(default = "default_rate")]
    pub rate_limit_per_sec: f64,
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default)]
    pub system_prompt: Option<String>,

    /// Oracle: minimum segment count it recognizes, for every concept.
    #[serde(default)]
    pub threshold: Option<usize>,
    /// Oracle: per-concept thresholds overriding `threshold`.
    #[serde(default)]
    pub thresholds: BTreeMap<String, usize>,
    /// Oracle: probability of answering correctly above the threshold.
    #[serde(default = "default_probability")]
    pub success_probability: f64,
}

impl LearnerConfig {
    pub fn new(name: impl Into<String>, kind: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: kind.into(),
            model: None,
            temperature: default_temperature(),
            endpoint: None,
            path: default_path(),
            api_key_env: None,
            auth_header: default_auth_header(),
            auth_scheme: default_auth_scheme(),
            max_retries: default_retries(),
            request_timeout_secs: default_timeout(),
            retry_base_delay_ms: default_backoff(),
            rate_limit_per_sec: default_rate(),
            max_tokens: None,
            system_prompt: None,
            threshold: None,
            thresholds: BTreeMap::new(),
            success_probability: default_probability(),
        }
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        if self.name.trim().is_empty() {
            return Err(LearnerError::Config("learner name is empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LearnerError::Config(format!(
                "{}: temperature {} outside [0, 2]",
                self.name, self.temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.success_probability) {
            return Err(LearnerError::Config(format!(
                "{}: success_probability {} outside [0, 1]",
                self.name, self.success_probability
            )));
        }
        if self.rate_limit_per_sec < 0.0 || !self.rate_limit_per_sec.is_finite() {
            return Err(LearnerError::Config(format!(
                "{}: rate_limit_per_sec must be a non-negative number",
                self.name
            )));
        }
        if self.request_timeout_secs <= 0.0 || !self.request_timeout_secs.is_finite() {
            return Err(LearnerError::Config(format!(
                "{}: request_timeout_secs must be positive",
                self.name
            )));
        }
        Ok(())
    }
}

pub fn validate_temperature(t: f64) -> Result<(), LearnerError> {
    if (0.0..=2.0).contains(&t) {
        Ok(())
    } else {
        Err(LearnerError::Config(format!("temperature {t} outside [0, 2]")))
    }
}

/// Independent generator for one query, derived from the run seed and a
/// query label, so results do not depend on scheduling order.
pub fn task_rng(seed: u64, label: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest[..32]);
    ChaCha8Rng::from_seed(bytes)
}
