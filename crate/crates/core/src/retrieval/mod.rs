//! Chunking, embedding and exact cosine ranking of evidence text.

mod embed;
mod index;
mod splitter;

pub use embed::{embed, EmbeddingBackend, HashingEmbedder, RemoteEmbedder};
pub use index::{cosine, FlatIndex, ScoredChunk, INDEX_FORMAT, INDEX_FORMAT_VERSION};
pub use splitter::split_recursive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetrievalError {
    #[error("zero-norm vector has no cosine similarity")]
    ZeroVector,
    #[error("chunk `{chunk}`: expected {expected}-dim vector, found {found}")]
    DimensionMismatch {
        chunk: String,
        expected: usize,
        found: usize,
    },
    #[error("chunk `{chunk}` has a non-finite component")]
    NonFinite { chunk: String },
    #[error("index is empty")]
    EmptyIndex,
    #[error("top-k requires k >= 1")]
    InvalidK,
    #[error("invalid retrieval config: {0}")]
    Config(String),
    #[error("embedding input {index} failed{}: {message}", if *retryable { " (retryable)" } else { "" })]
    Embed {
        index: usize,
        message: String,
        retryable: bool,
    },
    #[error("index file: {0}")]
    Persist(String),
}

/// Splitter and ranking parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub chunk_size: usize,
    pub overlap: usize,
    pub top_k: usize,
    pub dim: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            chunk_size: 500,
            overlap: 50,
            top_k: 12,
            dim: 512,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.chunk_size == 0 || self.overlap >= self.chunk_size {
            return Err(RetrievalError::Config(format!(
                "overlap {} must be smaller than chunk_size {}",
                self.overlap, self.chunk_size
            )));
        }
        if self.top_k == 0 {
            return Err(RetrievalError::Config("top_k must be at least 1".into()));
        }
        if self.dim == 0 {
            return Err(RetrievalError::Config("dim must be at least 1".into()));
        }
        Ok(())
    }
}

/// A contiguous character span `[start, end)` of a source document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl Chunk {
    pub fn id(&self) -> String {
        format!("{}#{}", self.doc_id, self.start)
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// A chunk with its embedding. Components are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedChunk {
    pub chunk: Chunk,
    pub vector: Vec<f64>,
}

impl EmbeddedChunk {
    pub fn new(chunk: Chunk, vector: Vec<f64>) -> Result<Self, RetrievalError> {
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(RetrievalError::NonFinite { chunk: chunk.id() });
        }
        Ok(Self { chunk, vector })
    }
}
