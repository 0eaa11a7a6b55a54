//! Client for OpenAI-compatible `/v1/embeddings` endpoints.

use std::time::Duration;

use serde::Deserialize;
use tracing::warn;

use super::{check_texts, Embedder, ProviderConfig, RetryPolicy};
use crate::error::{ProviderError, Result};
use crate::types::EmbeddingVector;

const MAX_RESPONSE_BYTES: u64 = 512 * 1024 * 1024;

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    index: usize,
    embedding: Vec<f64>,
}

pub struct RemoteEmbedder {
    endpoint: String,
    model: String,
    api_key: String,
    dim: usize,
    batch_size: usize,
    max_in_flight: usize,
    retry: RetryPolicy,
    tag: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemoteEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteEmbedder")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("dim", &self.dim)
            .field("api_key", &"[REDACTED]")
            .finish()
    }
}

enum Attempt {
    Done(Vec<EmbeddingVector>),
    Retry(ProviderError),
    Fatal(ProviderError),
}

impl RemoteEmbedder {
    /// Reads the API key from `config.api_key_env` at construction.
    pub fn new(config: &ProviderConfig) -> Result<Self, ProviderError> {
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| ProviderError::MissingApiKey(config.api_key_env.clone()))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .build()
            .into();
        Ok(Self {
            endpoint: format!("{}/v1/embeddings", config.base_url.trim_end_matches('/')),
            model: config.model_name.clone(),
            api_key,
            dim: config.dim,
            batch_size: config.batch_size,
            max_in_flight: config.max_in_flight,
            retry: config.retry.clone(),
            tag: config.tag(),
            agent,
        })
    }

    fn attempt(&self, texts: &[String], attempts: u32) -> Attempt {
        let body = serde_json::json!({ "model": self.model, "input": texts });
        let mut response = match self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
        {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry(ProviderError::Transport {
                    attempts,
                    message: e.to_string(),
                })
            }
        };
        let status = response.status().as_u16();
        let text = match response.body_mut().with_config().limit(MAX_RESPONSE_BYTES).read_to_string() {
            Ok(t) => t,
            Err(e) => {
                return Attempt::Retry(ProviderError::Transport {
                    attempts,
                    message: format!("reading response body: {e}"),
                })
            }
        };
        if !(200..300).contains(&status) {
            let err = ProviderError::Status { status, attempts, body: text };
            return if status == 429 || status >= 500 {
                Attempt::Retry(err)
            } else {
                Attempt::Fatal(err)
            };
        }
        match self.parse(&text, texts.len()) {
            Ok(v) => Attempt::Done(v),
            Err(e) => Attempt::Fatal(e),
        }
    }

    /// Order rows by the returned `index` field and check every row's length.
    fn parse(&self, body: &str, expected: usize) -> Result<Vec<EmbeddingVector>, ProviderError> {
        let parsed: EmbeddingResponse =
            serde_json::from_str(body).map_err(|e| ProviderError::Response(e.to_string()))?;
        if parsed.data.len() != expected {
            return Err(ProviderError::Response(format!(
                "expected {expected} embeddings, got {}",
                parsed.data.len()
            )));
        }
        let mut slots: Vec<Option<EmbeddingVector>> = vec![None; expected];
        for item in parsed.data {
            if item.embedding.len() != self.dim {
                return Err(ProviderError::Dimension {
                    expected: self.dim,
                    actual: item.embedding.len(),
                });
            }
            let slot = slots
                .get_mut(item.index)
                .ok_or_else(|| ProviderError::Response(format!("index {} out of range", item.index)))?;
            if slot.is_some() {
                return Err(ProviderError::Response(format!("duplicate index {}", item.index)));
            }
            *slot = Some(EmbeddingVector::new(item.embedding).map_err(|e| ProviderError::Response(e.to_string()))?);
        }
        Ok(slots.into_iter().map(|s| s.expect("all indices filled")).collect())
    }
}

impl Embedder for RemoteEmbedder {
    fn tag(&self) -> String {
        self.tag.clone()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        check_texts(texts)?;
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut attempt = 1;
        loop {
            match self.attempt(texts, attempt) {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) if attempt >= self.retry.max_attempts => return Err(e),
                Attempt::Retry(e) => {
                    let delay = self.retry.backoff(attempt);
                    warn!(attempt, max = self.retry.max_attempts, ?delay, error = %e, "embedding request failed, retrying");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
            }
        }
    }

    fn batch_size(&self) -> usize {
        self.batch_size
    }

    fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }
}
