//! Embedding providers: the deterministic offline stand-in, an HTTP client
//! for a remote vendor, and a latency-simulating mock for benchmarks.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::embed_offline;

/// Something that turns headline text into vectors.
///
/// `embed_batch` is called from many fetch worker threads concurrently and
/// must be deterministic per text for a given model: re-fetching a headline
/// must reproduce the stored bytes.
pub trait EmbeddingProvider: Sync {
    fn model_id(&self) -> &str;
    fn dim(&self) -> usize;
    /// Largest number of texts a single call may carry.
    fn max_batch(&self) -> usize {
        1
    }
    fn embed_batch(&self, texts: &[&str]) -> std::result::Result<Vec<Vec<f64>>, String>;
}

/// Offline provider backed by [`embed_offline`]; no network, fully seeded.
#[derive(Debug, Clone)]
pub struct OfflineProvider {
    pub model_id: String,
    pub dim: usize,
    pub seed: u64,
}

impl OfflineProvider {
    pub fn new(model_id: &str, dim: usize, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config(format!("embedding dim must be >= 2, got {dim}")));
        }
        Ok(OfflineProvider {
            model_id: model_id.to_string(),
            dim,
            seed,
        })
    }
}

impl EmbeddingProvider for OfflineProvider {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> std::result::Result<Vec<Vec<f64>>, String> {
        Ok(texts
            .iter()
            .map(|t| embed_offline(t, &self.model_id, self.dim, self.seed).values)
            .collect())
    }
}

/// Offline provider that sleeps per call, for exercising the concurrent
/// pipeline the way a remote round-trip would.
pub struct MockLatencyProvider {
    inner: OfflineProvider,
    pub latency: Duration,
    /// Extra uniform jitter in [0, jitter), seeded per text so delays are
    /// randomized yet reproducible.
    pub jitter: Duration,
    pub jitter_seed: u64,
    calls: std::sync::atomic::AtomicUsize,
}

impl MockLatencyProvider {
    pub fn new(inner: OfflineProvider, latency: Duration) -> Self {
        MockLatencyProvider {
            inner,
            latency,
            jitter: Duration::ZERO,
            jitter_seed: 0,
            calls: std::sync::atomic::AtomicUsize::new(0),
        }
    }

    pub fn with_jitter(mut self, jitter: Duration, seed: u64) -> Self {
        self.jitter = jitter;
        self.jitter_seed = seed;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(std::sync::atomic::Ordering::SeqCst)
    }
}

impl EmbeddingProvider for MockLatencyProvider {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed_batch(&self, texts: &[&str]) -> std::result::Result<Vec<Vec<f64>>, String> {
        self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        let mut delay = self.latency;
        if !self.jitter.is_zero() {
            let h = crate::hash::fnv1a_extend(
                crate::hash::fnv1a(&self.jitter_seed.to_le_bytes()),
                texts.first().unwrap_or(&"").as_bytes(),
            );
            let frac = (h % 1000) as f64 / 1000.0;
            delay += Duration::from_secs_f64(self.jitter.as_secs_f64() * frac);
        }
        std::thread::sleep(delay);
        self.inner.embed_batch(texts)
    }
}

#[derive(Debug, Serialize)]
struct RemoteRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Debug, Deserialize)]
struct RemoteResponse {
    vectors: Vec<Vec<f64>>,
}

/// HTTP client for a remote embedding endpoint.
///
/// Wire format: `POST endpoint` with `{"model": .., "input": [texts]}`,
/// answered by `{"vectors": [[f64]..]}`. The bearer token is read from the
/// named environment variable at construction.
pub struct RemoteProvider {
    pub model_id: String,
    pub dim: usize,
    pub endpoint: String,
    pub request_batch: usize,
    token: String,
    agent: ureq::Agent,
}

impl RemoteProvider {
    pub fn new(
        model_id: &str,
        dim: usize,
        endpoint: &str,
        auth_env: &str,
        request_batch: usize,
    ) -> Result<Self> {
        let token = std::env::var(auth_env).map_err(|_| {
            Error::Config(format!("auth token environment variable {auth_env} not set"))
        })?;
        if request_batch == 0 {
            return Err(Error::Config("request batch must be >= 1".into()));
        }
        Ok(RemoteProvider {
            model_id: model_id.to_string(),
            dim,
            endpoint: endpoint.to_string(),
            request_batch,
            token,
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(30))
                .build(),
        })
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn max_batch(&self) -> usize {
        self.request_batch
    }

    fn embed_batch(&self, texts: &[&str]) -> std::result::Result<Vec<Vec<f64>>, String> {
        let body = serde_json::to_value(RemoteRequest {
            model: &self.model_id,
            input: texts,
        })
        .map_err(|e| e.to_string())?;
        let response = self
            .agent
            .post(&self.endpoint)
            .set("Authorization", &format!("Bearer {}", self.token))
            .send_json(body)
            .map_err(|e| e.to_string())?;
        let parsed: RemoteResponse = response.into_json().map_err(|e| e.to_string())?;
        if parsed.vectors.len() != texts.len() {
            return Err(format!(
                "provider returned {} vectors for {} inputs",
                parsed.vectors.len(),
                texts.len()
            ));
        }
        for v in &parsed.vectors {
            if v.len() != self.dim {
                return Err(format!("vector of dim {} (expected {})", v.len(), self.dim));
            }
        }
        Ok(parsed.vectors)
    }
}
