//! Text embedding providers.
//!
//! Every provider returns unit-norm vectors so cosine similarity reduces to a
//! dot product.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::tokenize;
use crate::error::{Error, Result};

pub const DEFAULT_HASH_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    vector: Vec<f64>,
}

impl Embedding {
    /// L2-normalizes `vector`. Zero or non-finite vectors are rejected.
    pub fn normalized(mut vector: Vec<f64>) -> Result<Self> {
        if vector.is_empty() {
            return Err(Error::InvalidInput("embedding has zero dimensions".into()));
        }
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidInput(
                "embedding has zero or non-finite norm".into(),
            ));
        }
        for x in &mut vector {
            *x /= norm;
        }
        Ok(Self { vector })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vector
    }
}

/// Cosine similarity of two unit vectors, clamped to `[-1, 1]`.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    // Summing pairs in index order makes the result symmetric bit for bit.
    let dot: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;

    fn dim(&self) -> usize;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>>;

    fn embed(&self, text: &str) -> Result<Embedding> {
        let mut out = self.embed_batch(&[text])?;
        out.pop()
            .ok_or_else(|| Error::InvalidInput("provider returned no embedding".into()))
    }
}

fn check_text(text: &str) -> Result<()> {
    if text.trim().is_empty() {
        Err(Error::InvalidInput("cannot embed empty text".into()))
    } else {
        Ok(())
    }
}

/// Deterministic offline provider: each token is hashed to one signed bucket
/// of a `dim`-length vector, so the output depends only on the token multiset.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    id: String,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput(
                "hash embedder dim must be positive".into(),
            ));
        }
        Ok(Self {
            dim,
            id: format!("hash-{dim}"),
        })
    }

    fn feature(&self, token: &str) -> (usize, f64) {
        let digest = Sha256::digest(token.as_bytes());
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        let bucket = (u64::from_le_bytes(head) % self.dim as u64) as usize;
        let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
        (bucket, sign)
    }

    fn embed_one(&self, text: &str) -> Result<Embedding> {
        check_text(text)?;
        let mut tokens = tokenize(text);
        if tokens.is_empty() {
            tokens.push(text.trim().to_string());
        }
        let mut v = vec![0.0; self.dim];
        for t in &tokens {
            let (bucket, sign) = self.feature(t);
            v[bucket] += sign;
        }
        if v.iter().all(|x| *x == 0.0) {
            // Colliding tokens cancelled out; fall back to the sorted multiset as one feature.
            tokens.sort();
            let (bucket, sign) = self.feature(&tokens.join(" "));
            v[bucket] = sign;
        }
        Embedding::normalized(v)
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_HASH_DIM).expect("positive default dim")
    }
}

impl Embedder for HashEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteEmbedderConfig {
    pub url: String,
    #[serde(default)]
    pub token: Option<String>,
    pub dim: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_batch() -> usize {
    32
}

fn default_retries() -> u32 {
    3
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// HTTP provider. POSTs `{"texts": [...]}` and expects `{"vectors": [[...], ...]}`
/// with one vector per text, in order.
pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    agent: ureq::Agent,
    id: String,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig) -> Result<Self> {
        if config.dim == 0 || config.batch_size == 0 {
            return Err(Error::InvalidInput(
                "embed.dim and embed.batch_size must be positive".into(),
            ));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        Ok(Self {
            id: format!("remote:{}", config.url),
            config,
            agent,
        })
    }

    fn post_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        let mut attempt = 0;
        loop {
            match self.try_post(texts) {
                Ok(v) => return Ok(v),
                Err(reason) if attempt < self.config.retries => {
                    log::warn!(
                        "embedding request failed (attempt {}): {reason}",
                        attempt + 1
                    );
                    thread::sleep(Duration::from_millis(250 << attempt));
                    attempt += 1;
                }
                Err(reason) => {
                    return Err(Error::Backend {
                        backend: self.id.clone(),
                        reason,
                    })
                }
            }
        }
    }

    fn try_post(&self, texts: &[&str]) -> std::result::Result<Vec<Embedding>, String> {
        let mut req = self.agent.post(&self.config.url);
        if let Some(token) = &self.config.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req
            .send_json(EmbedRequest { texts })
            .map_err(|e| e.to_string())?;
        let body: EmbedResponse = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        if body.vectors.len() != texts.len() {
            return Err(format!(
                "expected {} vectors, got {}",
                texts.len(),
                body.vectors.len()
            ));
        }
        body.vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.config.dim {
                    return Err(format!("expected dim {}, got {}", self.config.dim, v.len()));
                }
                Embedding::normalized(v).map_err(|e| e.to_string())
            })
            .collect()
    }
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        for t in texts {
            check_text(t)?;
        }
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.config.batch_size) {
            out.extend(self.post_batch(batch)?);
        }
        Ok(out)
    }
}
