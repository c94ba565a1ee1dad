use serde::{Deserialize, Serialize};

pub const DEFAULT_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    /// L2-normalizes `raw`. An all-zero input maps to the first basis vector.
    pub fn normalized(raw: &[f64]) -> Self {
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        let values = if norm == 0.0 {
            let mut v = vec![0.0f32; raw.len()];
            if let Some(first) = v.first_mut() {
                *first = 1.0;
            }
            v
        } else {
            raw.iter().map(|x| (x / norm) as f32).collect()
        };
        Self { values }
    }

    pub fn from_values(values: Vec<f32>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|x| (*x as f64) * (*x as f64))
            .sum::<f64>()
            .sqrt()
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        dot(&self.values, &other.values) / (self.norm() * other.norm())
    }
}

/// Dot product accumulated in f64, strictly left to right.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| *x as f64 * *y as f64)
        .sum()
}

pub trait Embedder: Send + Sync {
    /// Stable identifier; part of the index cache key.
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> EmbeddingVector;
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const SIGN_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

fn fnv1a(basis: u64, bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(basis, |h, b| (h ^ *b as u64).wrapping_mul(FNV_PRIME))
}

/// Feature-hashed character trigrams: each trigram of the lower-cased,
/// space-padded text adds ±1 to one of `dim` buckets. Bucket and sign come
/// from two independent FNV-1a hashes.
#[derive(Debug, Clone)]
pub struct HashedTrigramEmbedder {
    dim: usize,
    id: String,
}

impl HashedTrigramEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            id: format!("hashed-trigram-v1-{dim}"),
        }
    }
}

impl Default for HashedTrigramEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIM)
    }
}

impl Embedder for HashedTrigramEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> EmbeddingVector {
        let normalized = text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ");
        let mut raw = vec![0.0f64; self.dim];
        if !normalized.is_empty() {
            let chars: Vec<char> = format!(" {normalized} ").chars().collect();
            let mut buf = [0u8; 12];
            for window in chars.windows(3) {
                let mut len = 0;
                for c in window {
                    len += c.encode_utf8(&mut buf[len..]).len();
                }
                let bytes = &buf[..len];
                let bucket = (fnv1a(FNV_OFFSET, bytes) % self.dim as u64) as usize;
                let sign = if fnv1a(FNV_OFFSET ^ SIGN_SALT, bytes) >> 63 == 0 { 1.0 } else { -1.0 };
                raw[bucket] += sign;
            }
        }
        EmbeddingVector::normalized(&raw)
    }
}
