//! Headline embeddings: providers, the on-disk cache and the concurrent
//! many-fetchers/few-writers pipeline.
//!
//! Fetch workers pull headlines from a bounded queue and call the provider;
//! completed vectors flow over a channel to a small set of writer workers
//! that accumulate them and append whole batches of `flush_threshold`
//! entries to the cache file at once. A final flush persists any remainder.

mod cache;
mod fetch;
mod provider;

pub use cache::{CacheEntry, EmbeddingCache, LoadStats};
pub use fetch::{fetch_embeddings, FetchConfig, FetchReport};
pub use provider::{
    EmbeddingProvider, MockLatencyProvider, OfflineProvider, RemoteProvider,
};

use serde::{Deserialize, Serialize};

use crate::hash;

/// A fixed-dimension embedding for one (headline, model) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub model_id: String,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        dot / (self.norm() * other.norm())
    }
}

/// Deterministic offline embedding: a counter-based generator seeded from
/// (text, model, seed) drives standard normals, normalized to unit length.
/// Approximately uniform on the sphere, so distinct texts land far apart
/// with overwhelming probability.
pub fn embed_offline(text: &str, model_id: &str, dim: usize, seed: u64) -> EmbeddingVector {
    assert!(dim >= 2, "embedding dim must be >= 2");
    let mut h = hash::fnv1a(text.as_bytes());
    h = hash::fnv1a_extend(h, model_id.as_bytes());
    h = hash::fnv1a_extend(h, &seed.to_le_bytes());

    let mut gen = SplitMix64 { state: h };
    let mut values = Vec::with_capacity(dim);
    while values.len() < dim {
        let (a, b) = gen.next_normal_pair();
        values.push(a);
        if values.len() < dim {
            values.push(b);
        }
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut values {
        *v /= norm;
    }
    EmbeddingVector {
        model_id: model_id.to_string(),
        dim,
        values,
    }
}

/// Counter-based generator (SplitMix64): each draw advances the state by a
/// fixed constant, so output k is a pure function of (seed, k).
struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in (0, 1].
    fn next_open_unit(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) / ((1u64 << 53) as f64)
    }

    /// Box-Muller pair of standard normals.
    fn next_normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.next_open_unit();
        let u2 = self.next_open_unit();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offline_embedding_is_deterministic() {
        let a = embed_offline("Fed raises rates", "small", 64, 7);
        let b = embed_offline("Fed raises rates", "small", 64, 7);
        assert_eq!(a, b);
        assert_ne!(a, embed_offline("Fed raises rates", "small", 64, 8));
        assert_ne!(a, embed_offline("Fed raises rates", "large", 64, 7));
    }

    #[test]
    fn offline_embedding_has_unit_norm() {
        for (i, text) in ["a", "bb", "a longer headline", ""].iter().enumerate() {
            let v = embed_offline(text, "m", 16 + i, 3);
            assert!((v.norm() - 1.0).abs() < 1e-9, "norm {}", v.norm());
        }
    }

    #[test]
    fn distinct_texts_stay_spread_out() {
        let vectors: Vec<EmbeddingVector> = (0..1000)
            .map(|i| embed_offline(&format!("headline number {i}"), "small", 64, 1))
            .collect();
        let mut max_cos = f64::NEG_INFINITY;
        for i in 0..vectors.len() {
            for j in i + 1..vectors.len() {
                max_cos = max_cos.max(vectors[i].cosine(&vectors[j]));
            }
        }
        assert!(max_cos < 0.9, "max pairwise cosine {max_cos}");
    }
}
