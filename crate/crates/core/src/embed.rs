//! Embedding vectors, distance metrics and embedding providers.
//!
//! The built-in provider is a signed feature-hashing embedder over word
//! unigrams and character trigrams. It needs no model weights and is
//! bit-for-bit deterministic. A pretrained model can be plugged in through
//! [`HttpEmbedder`], which talks to a local process over HTTP.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{PalaceError, Result};
use crate::scalar::Scalar;

/// Tolerance on the unit norm of every vector handed out by [`embed_text`].
pub const NORM_TOLERANCE: f64 = 1e-6;

pub const DEFAULT_HASH_SEED: u64 = 0x5eed_0f9a_1ace;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    #[default]
    Cosine,
    L2,
}

impl DistanceMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            DistanceMetric::Cosine => "cosine",
            DistanceMetric::L2 => "l2",
        }
    }

    /// Distance without dimension checks; callers guarantee equal lengths.
    #[inline]
    pub fn eval<T: Scalar>(self, a: &[T], b: &[T]) -> f64 {
        match self {
            DistanceMetric::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
                for (x, y) in a.iter().zip(b) {
                    let (x, y) = (x.as_f64(), y.as_f64());
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                let denom = (na * nb).sqrt();
                if denom == 0.0 {
                    1.0
                } else {
                    1.0 - dot / denom
                }
            }
            DistanceMetric::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| {
                    let d = x.as_f64() - y.as_f64();
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DistanceMetric {
    type Err = PalaceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(DistanceMetric::Cosine),
            "l2" => Ok(DistanceMetric::L2),
            other => Err(PalaceError::invalid(format!("unknown distance metric {other:?}"))),
        }
    }
}

/// Fixed-length real vector with finite components.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> EmbeddingVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(PalaceError::invalid("embedding must have at least one component"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PalaceError::invalid("embedding has non-finite components"));
        }
        Ok(EmbeddingVector { values })
    }

    /// Scales to unit length. Zero vectors are rejected.
    pub fn normalized(values: Vec<T>) -> Result<Self> {
        let mut v = Self::new(values)?;
        let norm = v.norm();
        if norm == 0.0 {
            return Err(PalaceError::invalid("cannot normalize a zero vector"));
        }
        for x in &mut v.values {
            *x = T::from_f64_lossy(x.as_f64() / norm);
        }
        Ok(v)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x.as_f64().powi(2)).sum::<f64>().sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= NORM_TOLERANCE
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn scaled(&self, factor: f64) -> Self {
        EmbeddingVector {
            values: self.values.iter().map(|x| T::from_f64_lossy(x.as_f64() * factor)).collect(),
        }
    }
}

fn check_dims<T: Scalar>(a: &EmbeddingVector<T>, b: &EmbeddingVector<T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(PalaceError::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// `1 - a.b / (|a||b|)`, in `[0, 2]`.
pub fn cosine_distance<T: Scalar>(a: &EmbeddingVector<T>, b: &EmbeddingVector<T>) -> Result<f64> {
    check_dims(a, b)?;
    if a.norm() == 0.0 || b.norm() == 0.0 {
        return Err(PalaceError::invalid("cosine distance undefined for zero vector"));
    }
    Ok(DistanceMetric::Cosine.eval(a.as_slice(), b.as_slice()).clamp(0.0, 2.0))
}

pub fn l2_distance<T: Scalar>(a: &EmbeddingVector<T>, b: &EmbeddingVector<T>) -> Result<f64> {
    check_dims(a, b)?;
    Ok(DistanceMetric::L2.eval(a.as_slice(), b.as_slice()))
}

/// Source of raw (unnormalized) embeddings.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    /// Whether equal inputs always produce equal outputs.
    fn deterministic(&self) -> bool;
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>>;
}

/// Embeds one text and normalizes it to unit length.
pub fn embed_text(provider: &dyn EmbeddingProvider, text: &str) -> Result<EmbeddingVector<f32>> {
    embed_texts(provider, &[text]).map(|mut v| v.remove(0))
}

pub fn embed_texts(
    provider: &dyn EmbeddingProvider,
    texts: &[&str],
) -> Result<Vec<EmbeddingVector<f32>>> {
    if texts.iter().any(|t| t.is_empty()) {
        return Err(PalaceError::invalid("cannot embed empty text"));
    }
    let raw = provider.embed_batch(texts)?;
    if raw.len() != texts.len() {
        return Err(PalaceError::Embedding(format!(
            "{} returned {} vectors for {} texts",
            provider.name(),
            raw.len(),
            texts.len()
        )));
    }
    raw.into_iter()
        .map(|v| {
            if v.len() != provider.dim() {
                return Err(PalaceError::Embedding(format!(
                    "{} returned dimension {}, expected {}",
                    provider.name(),
                    v.len(),
                    provider.dim()
                )));
            }
            EmbeddingVector::normalized(v).map_err(|e| PalaceError::Embedding(e.to_string()))
        })
        .collect()
}

// 64-bit FNV-1a, seeded by folding the seed into the offset basis, followed
// by a murmur3 finalizer so that `h % dim` and the sign bit are well mixed.
fn feature_hash(seed: u64, kind: u8, token: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET ^ seed;
    for b in std::iter::once(kind).chain(token.bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(PRIME);
    }
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^ (h >> 33)
}

fn accumulate(acc: &mut [f32], seed: u64, kind: u8, token: &str) {
    let h = feature_hash(seed, kind, token);
    let slot = (h % acc.len() as u64) as usize;
    acc[slot] += if h >> 63 == 0 { 1.0 } else { -1.0 };
}

/// Unnormalized signed feature-hash vector of `text`. Order of words does
/// not matter; every word contributes its unigram and the trigrams of
/// `^word$`.
pub fn hash_features(text: &str, dim: usize, seed: u64) -> Vec<f32> {
    let mut acc = vec![0.0f32; dim];
    if dim == 0 {
        return acc;
    }
    let words = crate::text::words(text);
    for w in &words {
        accumulate(&mut acc, seed, b'w', w);
        let padded: Vec<char> = std::iter::once('^')
            .chain(w.chars())
            .chain(std::iter::once('$'))
            .collect();
        for tri in padded.windows(3) {
            let tri: String = tri.iter().collect();
            accumulate(&mut acc, seed, b'c', &tri);
        }
    }
    // Punctuation-only input, or features that cancelled out exactly, still
    // need a direction.
    if !text.trim().is_empty() && acc.iter().all(|&x| x == 0.0) {
        accumulate(&mut acc, seed, b'r', text.trim());
    }
    acc
}

/// Normalized built-in embedding; a pure function of `(text, dim)`.
pub fn builtin_hash_embed(text: &str, dim: usize) -> Result<EmbeddingVector<f32>> {
    if dim == 0 {
        return Err(PalaceError::invalid("embedding dimension must be positive"));
    }
    if text.trim().is_empty() {
        return Err(PalaceError::invalid("cannot embed empty text"));
    }
    EmbeddingVector::normalized(hash_features(text, dim, DEFAULT_HASH_SEED))
}

#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        HashEmbedder {
            dim,
            seed: DEFAULT_HASH_SEED,
        }
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn name(&self) -> &str {
        "builtin-hash"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        Ok(texts.iter().map(|t| hash_features(t, self.dim, self.seed)).collect())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// Client for an embedding service answering `POST {base}/embed` with
/// `{"texts": [...]}` -> `{"vectors": [[...]]}`. The underlying agent pools
/// connections and may be shared between threads.
pub struct HttpEmbedder {
    endpoint: String,
    dim: usize,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(base_url: &str, dim: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        HttpEmbedder {
            endpoint: format!("{}/embed", base_url.trim_end_matches('/')),
            dim,
            agent,
        }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn name(&self) -> &str {
        &self.endpoint
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn deterministic(&self) -> bool {
        false
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(EmbedRequest { texts })
            .map_err(|e| PalaceError::Embedding(format!("{}: {e}", self.endpoint)))?;
        let body: EmbedResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| PalaceError::Embedding(format!("{}: {e}", self.endpoint)))?;
        Ok(body.vectors)
    }
}
