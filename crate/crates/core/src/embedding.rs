//! Phrase embeddings and cosine similarity.

use std::collections::HashMap;
use std::io::BufRead;

use serde::Deserialize;

use crate::extraction::normalize;
use crate::jsonl::{self, JsonlError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VectorError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero vector")]
    ZeroVector,
    #[error("vector has a non-finite component")]
    NonFinite,
    #[error("empty vector")]
    Empty,
    #[error("phrase {0:?} normalizes to an empty term")]
    EmptyPhrase(String),
    #[error("duplicate phrase {0:?}")]
    Duplicate(String),
}

/// `u·v / (‖u‖‖v‖)`, clamped to [-1, 1].
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, VectorError> {
    if u.len() != v.len() {
        return Err(VectorError::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let norm_u = norm(u);
    let norm_v = norm(v);
    if norm_u == 0.0 || norm_v == 0.0 {
        return Err(VectorError::ZeroVector);
    }
    Ok((dot / (norm_u * norm_v)).clamp(-1.0, 1.0))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Phrase → fixed-dimension vector. Keys are normalized term text.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dimension: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Result<Self, VectorError> {
        if dimension == 0 {
            return Err(VectorError::Empty);
        }
        Ok(Self {
            dimension,
            entries: HashMap::new(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, phrase: &str, vector: Vec<f64>) -> Result<(), VectorError> {
        if vector.len() != self.dimension {
            return Err(VectorError::DimensionMismatch {
                left: self.dimension,
                right: vector.len(),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(VectorError::NonFinite);
        }
        if norm(&vector) == 0.0 {
            return Err(VectorError::ZeroVector);
        }
        let key = normalize(phrase, true)
            .map_err(|_| VectorError::EmptyPhrase(phrase.to_owned()))?
            .into_string();
        if self.entries.contains_key(&key) {
            return Err(VectorError::Duplicate(key));
        }
        self.entries.insert(key, vector);
        Ok(())
    }

    pub fn get(&self, phrase: &str) -> Option<&[f64]> {
        self.entries.get(phrase).map(Vec::as_slice)
    }

    /// Cosine similarity of two stored phrases, `None` if either is missing.
    pub fn similarity(&self, a: &str, b: &str) -> Option<f64> {
        let (u, v) = (self.get(a)?, self.get(b)?);
        Some(cosine_similarity(u, v).expect("stored vectors share a dimension and are non-zero"))
    }

    /// Reads `{"text": ..., "vector": [...]}` lines. The first line fixes the
    /// dimension.
    pub fn read_jsonl(reader: impl BufRead) -> Result<Self, JsonlError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Line {
            text: String,
            vector: Vec<f64>,
        }

        let mut table: Option<EmbeddingTable> = None;
        jsonl::read_validated(reader, |line: &Line| {
            let table = match &mut table {
                Some(t) => t,
                None => table.insert(EmbeddingTable::new(line.vector.len()).map_err(|e| e.to_string())?),
            };
            table.insert(&line.text, line.vector.clone()).map_err(|e| e.to_string())
        })?;
        Ok(table.unwrap_or_default())
    }
}
