use thiserror::Error;

use crate::clients::ClientError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncoderError {
    #[error("embedding service: {0}")]
    Service(#[from] ClientError),
    #[error("embedding has dimension {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("embedding has non-finite components")]
    NonFinite,
}

impl EncoderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, EncoderError::Service(e) if e.is_retryable())
    }
}

pub trait TextEncoder: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, EncoderError>;
}

pub fn l2_normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// `a·b / (|a||b|)`, 0 when either norm is 0, clamped to [-1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, EncoderError> {
    if a.len() != b.len() {
        return Err(EncoderError::Dimension { expected: a.len(), found: b.len() });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Built-in offline encoder: tokens split on `|` and `;`, FNV-1a hashed into a count vector,
/// L2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct HashEncoder {
    dim: usize,
    id: String,
}

impl HashEncoder {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "encoder dimension must be positive");
        Self { dim, id: format!("hash-bow-{dim}") }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dim as u64) as usize
    }

    pub fn tokens(text: &str) -> impl Iterator<Item = &str> {
        text.split(['|', ';']).map(str::trim).filter(|t| !t.is_empty())
    }
}

impl Default for HashEncoder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM)
    }
}

impl TextEncoder for HashEncoder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EncoderError> {
        let mut v = vec![0.0; self.dim];
        for t in Self::tokens(text) {
            v[self.bucket(t)] += 1.0;
        }
        l2_normalize(&mut v);
        Ok(v)
    }
}
