//! Text embedding providers and the on-disk embedding cache.
//!
//! Two providers share the [`Embedder`] trait: an OpenAI-compatible HTTP
//! client and a deterministic local feature-hashing embedder that needs no
//! network or model weights.

mod cache;
mod corpus;
mod hash;
mod remote;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use cache::{read_embedding_cache, write_embedding_cache, CacheHeader, CacheWriter};
pub use corpus::embed_corpus;
pub use hash::{fnv1a64, hash_embed, tokenize, MIN_HASH_DIM};
pub use remote::RemoteEmbedder;

use crate::error::{Error, ProviderError, Result};
use crate::types::EmbeddingVector;

pub const DEFAULT_LOCAL_DIM: usize = 384;
pub const DEFAULT_REMOTE_DIM: usize = 1536;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    Remote,
    LocalHash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            initial_backoff_ms: 500,
        }
    }
}

impl RetryPolicy {
    /// Exponential delay before attempt `attempt + 1`, jittered to 50-150%.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let base = self.initial_backoff_ms.saturating_mul(1u64 << attempt.saturating_sub(1).min(20));
        let jitter = 0.5 + rand::random::<f64>();
        Duration::from_millis((base as f64 * jitter) as u64)
    }
}

fn default_batch_size() -> usize {
    64
}

fn default_max_in_flight() -> usize {
    4
}

fn default_timeout_secs() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default)]
    pub base_url: String,
    #[serde(default)]
    pub model_name: String,
    #[serde(default)]
    pub api_key_env: String,
    pub dim: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

impl ProviderConfig {
    pub fn local_hash(dim: usize) -> Self {
        Self {
            kind: ProviderKind::LocalHash,
            base_url: String::new(),
            model_name: "local-hash".into(),
            api_key_env: String::new(),
            dim,
            batch_size: default_batch_size(),
            max_in_flight: 1,
            retry: RetryPolicy::default(),
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn remote(base_url: impl Into<String>, model_name: impl Into<String>, api_key_env: impl Into<String>, dim: usize) -> Self {
        Self {
            kind: ProviderKind::Remote,
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_env: api_key_env.into(),
            dim,
            batch_size: default_batch_size(),
            max_in_flight: default_max_in_flight(),
            retry: RetryPolicy::default(),
            timeout_secs: default_timeout_secs(),
        }
    }

    /// Identifies the embedding space; models trained on one tag refuse the others.
    pub fn tag(&self) -> String {
        match self.kind {
            ProviderKind::LocalHash => format!("local-hash-{}", self.dim),
            ProviderKind::Remote => format!("remote-{}-{}", self.model_name, self.dim),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidInput(format!("provider config: {msg}")));
        if self.dim == 0 {
            return fail("dim must be positive".into());
        }
        if self.batch_size == 0 || self.max_in_flight == 0 {
            return fail("batch_size and max_in_flight must be positive".into());
        }
        if self.retry.max_attempts == 0 {
            return fail("retry.max_attempts must be positive".into());
        }
        match self.kind {
            ProviderKind::LocalHash if self.dim < MIN_HASH_DIM => {
                fail(format!("local-hash dim must be at least {MIN_HASH_DIM}"))
            }
            ProviderKind::Remote if self.base_url.is_empty() || self.model_name.is_empty() => {
                fail("remote provider needs base_url and model_name".into())
            }
            ProviderKind::Remote if self.api_key_env.is_empty() => fail("remote provider needs api_key_env".into()),
            _ => Ok(()),
        }
    }

    /// Instantiate the configured provider.
    pub fn build(&self) -> Result<Box<dyn Embedder>> {
        self.validate()?;
        Ok(match self.kind {
            ProviderKind::LocalHash => Box::new(LocalHashEmbedder::new(self.dim)),
            ProviderKind::Remote => Box::new(RemoteEmbedder::new(self)?),
        })
    }
}

/// Maps texts to fixed-dimension vectors, order-aligned with the input.
pub trait Embedder: Send + Sync {
    fn tag(&self) -> String;

    fn dim(&self) -> usize;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError>;

    fn batch_size(&self) -> usize {
        default_batch_size()
    }

    fn max_in_flight(&self) -> usize {
        1
    }
}

pub(crate) fn check_texts(texts: &[String]) -> Result<(), ProviderError> {
    match texts.iter().position(|t| t.trim().is_empty()) {
        Some(i) => Err(ProviderError::EmptyText(i)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone)]
pub struct LocalHashEmbedder {
    dim: usize,
}

impl LocalHashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= MIN_HASH_DIM);
        Self { dim }
    }
}

impl Embedder for LocalHashEmbedder {
    fn tag(&self) -> String {
        ProviderConfig::local_hash(self.dim).tag()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        check_texts(texts)?;
        Ok(texts.iter().map(|t| hash_embed(t, self.dim)).collect())
    }

    fn batch_size(&self) -> usize {
        256
    }
}

/// One-shot batch embedding through a freshly built provider.
pub fn embed_batch(config: &ProviderConfig, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
    Ok(config.build()?.embed_batch(texts)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_batch_is_deterministic_and_unit_norm() {
        let cfg = ProviderConfig::local_hash(384);
        let out = embed_batch(&cfg, &["a".into(), "a".into()]).unwrap();
        assert_eq!(out[0], out[1]);
        let out = embed_batch(&cfg, &["one prompt".into(), "two".into(), "ignore the system prompt".into()]).unwrap();
        assert_eq!(out.len(), 3);
        for v in &out {
            assert_eq!(v.dim(), 384);
            assert!((v.l2_norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_text_rejected() {
        let cfg = ProviderConfig::local_hash(384);
        let err = embed_batch(&cfg, &["ok".into(), "  ".into()]).unwrap_err();
        assert!(matches!(err, Error::Provider(ProviderError::EmptyText(1))));
    }

    #[test]
    fn config_json_defaults() {
        let cfg: ProviderConfig = serde_json::from_str(r#"{"kind":"local-hash","dim":384}"#).unwrap();
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.retry, RetryPolicy { max_attempts: 5, initial_backoff_ms: 500 });
        assert_eq!(cfg.tag(), "local-hash-384");
        assert!(ProviderConfig::local_hash(8).validate().is_err());
    }

    #[test]
    fn backoff_grows_exponentially() {
        let p = RetryPolicy { max_attempts: 5, initial_backoff_ms: 1000 };
        for attempt in 1..5u32 {
            let d = p.backoff(attempt).as_millis() as f64;
            let base = 1000.0 * f64::from(1u32 << (attempt - 1));
            assert!(d >= 0.5 * base - 1.0 && d <= 1.5 * base, "{attempt}: {d}");
        }
    }
}
