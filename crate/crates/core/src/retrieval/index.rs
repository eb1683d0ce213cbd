use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbeddedChunk, RetrievalError};
use crate::exec::Exec;

/// `format` field of a persisted index.
pub const INDEX_FORMAT: &str = "driftqa-flat-index";
pub const INDEX_FORMAT_VERSION: u32 = 1;

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine similarity, clamped to `[-1, 1]`. Zero vectors are an error.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, RetrievalError> {
    if u.len() != v.len() {
        return Err(RetrievalError::DimensionMismatch {
            chunk: "query".into(),
            expected: u.len(),
            found: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(RetrievalError::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredChunk<'a> {
    pub chunk: &'a EmbeddedChunk,
    pub score: f64,
}

/// Exact linear-scan index with cached norms.
///
/// Queries take `&self` and may run concurrently; additions take
/// `&mut self`.
#[derive(Debug, Clone)]
pub struct FlatIndex {
    dim: usize,
    entries: Vec<EmbeddedChunk>,
    norms: Vec<f64>,
    exec: Exec,
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    format: String,
    version: u32,
    dim: usize,
    entries: Vec<EmbeddedChunk>,
}

impl FlatIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
            norms: Vec::new(),
            exec: Exec::default(),
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[EmbeddedChunk] {
        &self.entries
    }

    /// Add chunks; nothing is added if any chunk is rejected.
    pub fn add(&mut self, chunks: Vec<EmbeddedChunk>) -> Result<(), RetrievalError> {
        let mut norms = Vec::with_capacity(chunks.len());
        for c in &chunks {
            if c.vector.len() != self.dim {
                return Err(RetrievalError::DimensionMismatch {
                    chunk: c.chunk.id(),
                    expected: self.dim,
                    found: c.vector.len(),
                });
            }
            if c.vector.iter().any(|x| !x.is_finite()) {
                return Err(RetrievalError::NonFinite { chunk: c.chunk.id() });
            }
            let n = norm(&c.vector);
            if n == 0.0 {
                return Err(RetrievalError::ZeroVector);
            }
            norms.push(n);
        }
        self.entries.extend(chunks);
        self.norms.extend(norms);
        Ok(())
    }

    /// The `min(k, len)` best chunks by descending cosine score. Equal
    /// scores are ordered by `(doc_id, start)` and then insertion order.
    pub fn query_top_k(&self, query: &[f64], k: usize) -> Result<Vec<ScoredChunk<'_>>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        if self.entries.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        if query.len() != self.dim {
            return Err(RetrievalError::DimensionMismatch {
                chunk: "query".into(),
                expected: self.dim,
                found: query.len(),
            });
        }
        let qn = norm(query);
        if qn == 0.0 {
            return Err(RetrievalError::ZeroVector);
        }
        let scores: Vec<f64> = self.exec.map_range(self.entries.len(), |i| {
            (dot(query, &self.entries[i].vector) / (qn * self.norms[i])).clamp(-1.0, 1.0)
        });
        let order = |a: &usize, b: &usize| -> Ordering {
            scores[*b]
                .total_cmp(&scores[*a])
                .then_with(|| self.entries[*a].chunk.doc_id.cmp(&self.entries[*b].chunk.doc_id))
                .then_with(|| self.entries[*a].chunk.start.cmp(&self.entries[*b].chunk.start))
                .then_with(|| a.cmp(b))
        };
        let mut idx: Vec<usize> = (0..self.entries.len()).collect();
        let k = k.min(idx.len());
        if k < idx.len() {
            idx.select_nth_unstable_by(k - 1, order);
            idx.truncate(k);
        }
        idx.sort_unstable_by(order);
        Ok(idx
            .into_iter()
            .map(|i| ScoredChunk {
                chunk: &self.entries[i],
                score: scores[i],
            })
            .collect())
    }

    /// Write the index as one JSON document with a versioned header.
    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let file = IndexFile {
            format: INDEX_FORMAT.into(),
            version: INDEX_FORMAT_VERSION,
            dim: self.dim,
            entries: self.entries.clone(),
        };
        let text = serde_json::to_string(&file).map_err(|e| RetrievalError::Persist(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| RetrievalError::Persist(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| RetrievalError::Persist(format!("{}: {e}", path.display())))?;
        let file: IndexFile = serde_json::from_str(&text).map_err(|e| RetrievalError::Persist(e.to_string()))?;
        if file.format != INDEX_FORMAT || file.version != INDEX_FORMAT_VERSION {
            return Err(RetrievalError::Persist(format!(
                "unsupported index format {} v{}",
                file.format, file.version
            )));
        }
        let mut index = FlatIndex::new(file.dim);
        index.add(file.entries)?;
        Ok(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::Chunk;

    fn chunk(doc: &str, start: usize, v: Vec<f64>) -> EmbeddedChunk {
        EmbeddedChunk::new(
            Chunk {
                doc_id: doc.into(),
                start,
                end: start + 1,
                text: "x".into(),
            },
            v,
        )
        .unwrap()
    }

    #[test]
    fn cosine_examples() {
        let u = [0.3, -1.2, 4.0];
        assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-9);
        assert!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap().abs() < 1e-9);
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        assert!((cosine(&u, &neg).unwrap() + 1.0).abs() < 1e-9);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(RetrievalError::ZeroVector));
    }

    #[test]
    fn add_examples() {
        let mut idx = FlatIndex::new(3);
        idx.add(vec![]).unwrap();
        assert_eq!(idx.len(), 0);
        idx.add((0..12).map(|i| chunk("d", i, vec![1.0, i as f64, 0.5])).collect())
            .unwrap();
        assert_eq!(idx.len(), 12);
        let err = idx.add(vec![chunk("bad", 0, vec![1.0, 2.0])]).unwrap_err();
        assert!(matches!(err, RetrievalError::DimensionMismatch { ref chunk, .. } if chunk == "bad#0"));
        assert_eq!(idx.len(), 12);
    }

    #[test]
    fn query_examples() {
        let mut idx = FlatIndex::new(2);
        idx.add((0..5).map(|i| chunk("d", i, vec![1.0, i as f64])).collect())
            .unwrap();
        assert_eq!(idx.query_top_k(&[1.0, 1.0], 12).unwrap().len(), 5);
        let hits = idx.query_top_k(&[1.0, 3.0], 2).unwrap();
        assert_eq!(hits[0].chunk.chunk.start, 3);
        assert!((hits[0].score - 1.0).abs() < 1e-12);
        assert_eq!(idx.query_top_k(&[0.0, 0.0], 2).unwrap_err(), RetrievalError::ZeroVector);
        assert_eq!(idx.query_top_k(&[1.0, 0.0], 0).unwrap_err(), RetrievalError::InvalidK);
    }

    #[test]
    fn ties_break_by_doc_then_start() {
        let mut idx = FlatIndex::new(2);
        idx.add(vec![
            chunk("b", 0, vec![1.0, 0.0]),
            chunk("a", 7, vec![2.0, 0.0]),
            chunk("a", 3, vec![1.0, 0.0]),
        ])
        .unwrap();
        let ids: Vec<String> = idx
            .query_top_k(&[1.0, 0.0], 3)
            .unwrap()
            .iter()
            .map(|h| h.chunk.chunk.id())
            .collect();
        assert_eq!(ids, ["a#3", "a#7", "b#0"]);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.json");
        let mut idx = FlatIndex::new(2);
        idx.add(vec![chunk("a", 0, vec![0.25, -1.5])]).unwrap();
        idx.save(&path).unwrap();
        let back = FlatIndex::load(&path).unwrap();
        assert_eq!(back.entries(), idx.entries());
    }
}
