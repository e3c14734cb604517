//! Language model gateway.
//!
//! Two roles sit behind one trait: a planning model that samples
//! continuations and scores perplexity, and a translation model that embeds
//! text. [`StubBackend`] runs hermetically over a small plan corpus;
//! [`RemoteBackend`] talks to an OpenAI-compatible server.

mod cache;
mod remote;
mod stub;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

pub use cache::DiskCache;
pub use remote::{RemoteBackend, RemoteConfig};
pub use stub::{HashEmbedder, StubBackend, StubConfig, StubPlan};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine of a zero vector")]
    ZeroVector,
    #[error("response cache: {0}")]
    Cache(String),
}

/// One sampled continuation with its generation score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// First line of the continuation, trimmed. Empty for a null sample.
    pub text: String,
    /// Mean per-token log-probability, never positive.
    pub mean_logprob: f64,
    pub token_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRequest {
    pub prompt: String,
    pub k: usize,
    pub stop: String,
    pub temperature: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding<F = f64> {
    pub vector: Vec<F>,
}

impl<F: Real> Embedding<F> {
    pub fn new(vector: Vec<F>) -> Self {
        Embedding { vector }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn norm(&self) -> F {
        self.vector.iter().fold(F::zero(), |acc, &x| acc + x * x).sqrt()
    }
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine<F: Real>(a: &Embedding<F>, b: &Embedding<F>) -> Result<F, LmError> {
    if a.dim() != b.dim() {
        return Err(LmError::DimensionMismatch(a.dim(), b.dim()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == F::zero() || nb == F::zero() {
        return Err(LmError::ZeroVector);
    }
    let dot = a
        .vector
        .iter()
        .zip(&b.vector)
        .fold(F::zero(), |acc, (&x, &y)| acc + x * y);
    Ok((dot / (na * nb)).max(-F::one()).min(F::one()))
}

/// The planning and translation models.
pub trait LanguageModel: Send + Sync {
    /// Identifies the backend and models, used in run manifests and cache keys.
    fn id(&self) -> String;

    /// Draws exactly `k` continuations of the prompt, each cut at `stop`.
    fn sample_continuations(&self, request: &SampleRequest) -> Result<Vec<Sample>, LmError>;

    /// `exp` of the mean negative log-likelihood of `continuation` given
    /// `prompt`. Always at least 1.
    fn perplexity(&self, prompt: &str, continuation: &str) -> Result<f64, LmError>;

    fn embed(&self, text: &str) -> Result<Embedding, LmError>;
}

impl<T: LanguageModel + ?Sized> LanguageModel for Arc<T> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn sample_continuations(&self, request: &SampleRequest) -> Result<Vec<Sample>, LmError> {
        (**self).sample_continuations(request)
    }

    fn perplexity(&self, prompt: &str, continuation: &str) -> Result<f64, LmError> {
        (**self).perplexity(prompt, continuation)
    }

    fn embed(&self, text: &str) -> Result<Embedding, LmError> {
        (**self).embed(text)
    }
}

/// Wraps a backend and remembers embeddings and perplexities, which the
/// planner requests repeatedly for the same strings.
pub struct Memoized<L> {
    inner: L,
    embeddings: Mutex<HashMap<String, Embedding>>,
    perplexities: Mutex<HashMap<(String, String), f64>>,
}

impl<L: LanguageModel> Memoized<L> {
    pub fn new(inner: L) -> Self {
        Memoized {
            inner,
            embeddings: Mutex::default(),
            perplexities: Mutex::default(),
        }
    }

    pub fn inner(&self) -> &L {
        &self.inner
    }
}

impl<L: LanguageModel> LanguageModel for Memoized<L> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn sample_continuations(&self, request: &SampleRequest) -> Result<Vec<Sample>, LmError> {
        self.inner.sample_continuations(request)
    }

    fn perplexity(&self, prompt: &str, continuation: &str) -> Result<f64, LmError> {
        let key = (prompt.to_string(), continuation.to_string());
        if let Some(v) = lock(&self.perplexities).get(&key) {
            return Ok(*v);
        }
        let v = self.inner.perplexity(prompt, continuation)?;
        lock(&self.perplexities).insert(key, v);
        Ok(v)
    }

    fn embed(&self, text: &str) -> Result<Embedding, LmError> {
        if let Some(v) = lock(&self.embeddings).get(text) {
            return Ok(v.clone());
        }
        let v = self.inner.embed(text)?;
        lock(&self.embeddings).insert(text.to_string(), v.clone());
        Ok(v)
    }
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

/// Backend selection as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub kind: BackendKind,
    pub base_url: Option<String>,
    pub planning_model: String,
    pub translation_model: String,
    pub timeout_secs: u64,
    pub retries: u32,
    pub cache_dir: Option<std::path::PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            kind: BackendKind::Stub,
            base_url: None,
            planning_model: "gpt2-large".into(),
            translation_model: "stsb-roberta-large".into(),
            timeout_secs: 60,
            retries: 3,
            cache_dir: None,
        }
    }
}
