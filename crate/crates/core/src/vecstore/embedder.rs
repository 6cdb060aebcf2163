//! Embedding providers.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Embedding, VecError};
use crate::hashing::{fnv1a64, mix64};
use crate::http::JsonClient;

pub const DEFAULT_DIM: usize = 1536;

pub trait EmbeddingProvider: Send + Sync {
    fn identifier(&self) -> &str;

    fn dimensionality(&self) -> usize;

    fn embed_text(&self, text: &str) -> Result<Embedding, VecError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, VecError> {
        texts.iter().map(|t| self.embed_text(t)).collect()
    }
}

/// Embeds `text`, checking the provider's output shape.
pub fn embed(provider: &dyn EmbeddingProvider, text: &str) -> Result<Embedding, VecError> {
    if text.trim().is_empty() {
        return Err(VecError::EmptyText);
    }
    let e = provider.embed_text(text)?;
    if e.dim() != provider.dimensionality() {
        return Err(VecError::DimensionMismatch {
            expected: provider.dimensionality(),
            got: e.dim(),
        });
    }
    Ok(e)
}

/// Deterministic offline embedder: signed feature hashing of lowercase
/// alphanumeric tokens, L2-normalized. Texts sharing tokens have positive
/// cosine; disjoint texts are near-orthogonal.
#[derive(Debug, Clone)]
pub struct HashEmbeddingProvider {
    identifier: String,
    dim: usize,
    seed: u64,
}

impl HashEmbeddingProvider {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashEmbeddingProvider {
            identifier: format!("hash-v1/d{dim}/s{seed}"),
            dim,
            seed,
        }
    }

    fn add(&self, v: &mut [f32], feature: &[u8]) {
        let h = mix64(fnv1a64(self.seed, feature));
        let slot = (h % self.dim as u64) as usize;
        v[slot] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }
}

impl EmbeddingProvider for HashEmbeddingProvider {
    fn identifier(&self) -> &str {
        &self.identifier
    }

    fn dimensionality(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, VecError> {
        let mut v = vec![0.0f32; self.dim];
        let lower = text.to_lowercase();
        let mut any = false;
        for tok in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            self.add(&mut v, tok.as_bytes());
            any = true;
        }
        if !any || v.iter().all(|&x| x == 0.0) {
            // Tokenless text or fully cancelling features: hash the raw bytes.
            self.add(&mut v, text.as_bytes());
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        Embedding::new(v)
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f32>,
}

/// Embeddings endpoint: `{model, input: [..]}` → `{data: [{embedding}]}`.
pub struct HttpEmbeddingProvider {
    identifier: String,
    endpoint: String,
    model: String,
    dim: usize,
    client: JsonClient,
}

impl HttpEmbeddingProvider {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, dim: usize, api_key: Option<String>) -> Self {
        let model = model.into();
        HttpEmbeddingProvider {
            identifier: format!("http:{model}/d{dim}"),
            endpoint: endpoint.into(),
            model,
            dim,
            client: JsonClient::new(api_key, Duration::from_secs(60), 2),
        }
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn identifier(&self) -> &str {
        &self.identifier
    }

    fn dimensionality(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, VecError> {
        self.embed_batch(&[text])?
            .pop()
            .ok_or_else(|| VecError::Provider("empty embeddings response".into()))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, VecError> {
        let body = EmbeddingRequest {
            model: &self.model,
            input: texts,
        };
        let resp: EmbeddingResponse = self.client.post(&self.endpoint, &body).map_err(VecError::Provider)?;
        if resp.data.len() != texts.len() {
            return Err(VecError::Provider(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                resp.data.len()
            )));
        }
        resp.data
            .into_iter()
            .map(|d| {
                if d.embedding.len() != self.dim {
                    return Err(VecError::DimensionMismatch {
                        expected: self.dim,
                        got: d.embedding.len(),
                    });
                }
                Embedding::new(d.embedding)
            })
            .collect()
    }
}
