//! Text embeddings and cosine similarity.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::util::stable_hash;

pub const DEFAULT_EMBEDDING_DIM: usize = 256;

/// Embeddings are recomputed from text on load and never persisted.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    norm: f64,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("embedding contains a non-finite entry"));
        }
        let norm = libm::sqrt(values.iter().map(|v| v * v).sum());
        Ok(Self { values, norm })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
            norm: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.norm == 0.0
    }
}

/// Cosine similarity; 0 when either side is the zero vector.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::input(alloc::format!(
            "embedding dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    if a.is_zero() || b.is_zero() {
        return Ok(0.0);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (a.norm * b.norm)).clamp(-1.0, 1.0))
}

/// Maps text to a fixed-dimension vector. Must be deterministic per text.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    /// Provider failures are reported as [`Error::Provider`], which is retriable.
    fn embed(&self, text: &str) -> Result<EmbeddingVector>;
}

/// Counts hashed character trigrams of the text padded with boundary markers.
///
/// Fully offline. The empty string has no trigrams and embeds to zeros.
#[derive(Debug, Clone)]
pub struct HashedTrigramEmbedder {
    dim: usize,
}

impl HashedTrigramEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("embedding dimension must be positive"));
        }
        Ok(Self { dim })
    }
}

impl Default for HashedTrigramEmbedder {
    fn default() -> Self {
        Self {
            dim: DEFAULT_EMBEDDING_DIM,
        }
    }
}

impl Embedder for HashedTrigramEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let mut counts = vec![0.0; self.dim];
        if !text.is_empty() {
            let mut padded = String::with_capacity(text.len() + 2);
            padded.push('\u{2}');
            padded.push_str(text);
            padded.push('\u{3}');
            let chars: Vec<char> = padded.chars().collect();
            let mut buf = [0u8; 12];
            for window in chars.windows(3) {
                let mut len = 0;
                for c in window {
                    len += c.encode_utf8(&mut buf[len..]).len();
                }
                let bucket = stable_hash(&[&buf[..len]]) % self.dim as u64;
                counts[bucket as usize] += 1.0;
            }
        }
        EmbeddingVector::new(counts)
    }
}
