use serde_json::{json, Value};

use super::RetrievalError;
use crate::exec::Exec;
use crate::llm::{HttpClient, LlmError};

/// Anything that turns texts into fixed-width vectors.
pub trait EmbeddingBackend: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, RetrievalError>;
}

/// Embed `texts`, checking that the backend honours `expected_dim` and
/// returns one vector per input in order.
pub fn embed(
    texts: &[String],
    backend: &dyn EmbeddingBackend,
    expected_dim: usize,
) -> Result<Vec<Vec<f64>>, RetrievalError> {
    if backend.dim() != expected_dim {
        return Err(RetrievalError::Config(format!(
            "embedder produces {}-dim vectors, config expects {expected_dim}",
            backend.dim()
        )));
    }
    let vectors = backend.embed(texts)?;
    if vectors.len() != texts.len() {
        return Err(RetrievalError::Embed {
            index: vectors.len().min(texts.len()),
            message: format!("backend returned {} vectors for {} inputs", vectors.len(), texts.len()),
            retryable: false,
        });
    }
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != expected_dim {
            return Err(RetrievalError::DimensionMismatch {
                chunk: format!("input {i}"),
                expected: expected_dim,
                found: v.len(),
            });
        }
    }
    Ok(vectors)
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Offline embedder: signed feature hashing of lowercase character
/// trigrams, L2-normalised. Texts shorter than three characters hash as a
/// single gram; the empty text maps to the zero vector.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
    salt: u64,
    exec: Exec,
}

impl HashingEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim: dim.max(1),
            salt: seed,
            exec: Exec::default(),
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    fn hash(&self, gram: &[char]) -> u64 {
        let mut h = FNV_OFFSET ^ self.salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut buf = [0u8; 4];
        for c in gram {
            for b in c.encode_utf8(&mut buf).bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(FNV_PRIME);
            }
        }
        // Final avalanche so bucket and sign bits are independent.
        h ^= h >> 33;
        h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
        h ^= h >> 33;
        h
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0f64; self.dim];
        let chars: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
        if chars.is_empty() {
            return v;
        }
        let mut add = |gram: &[char]| {
            let h = self.hash(gram);
            let bucket = (h % self.dim as u64) as usize;
            v[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        };
        if chars.len() < 3 {
            add(&chars);
        } else {
            for gram in chars.windows(3) {
                add(gram);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    }
}

impl EmbeddingBackend for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        Ok(self.exec.map(texts, |t| self.embed_one(t)))
    }
}

/// Client for an HTTP embeddings endpoint speaking the
/// `{model, input: [..]}` -> `{data: [{index, embedding}]}` shape.
pub struct RemoteEmbedder {
    http: HttpClient,
    model: String,
    dim: usize,
    batch_size: usize,
}

impl RemoteEmbedder {
    pub fn new(http: HttpClient, model: impl Into<String>, dim: usize) -> Self {
        Self {
            http,
            model: model.into(),
            dim,
            batch_size: 64,
        }
    }

    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }
}

impl EmbeddingBackend for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        let mut out = Vec::with_capacity(texts.len());
        for (b, batch) in texts.chunks(self.batch_size).enumerate() {
            let first = b * self.batch_size;
            let fail = |message: String, retryable: bool| RetrievalError::Embed {
                index: first,
                message,
                retryable,
            };
            let body = json!({"model": self.model, "input": batch});
            let resp = self.http.post_json(&body).map_err(|e| {
                let retryable = matches!(e, LlmError::Transport(_) | LlmError::Exhausted { .. });
                fail(e.to_string(), retryable)
            })?;
            let data = resp
                .get("data")
                .and_then(Value::as_array)
                .ok_or_else(|| fail("response has no `data` array".into(), false))?;
            let mut vectors: Vec<Option<Vec<f64>>> = vec![None; batch.len()];
            for (pos, item) in data.iter().enumerate() {
                let idx = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
                let emb = item
                    .get("embedding")
                    .and_then(Value::as_array)
                    .ok_or_else(|| fail(format!("data[{pos}] has no embedding"), false))?;
                let v: Option<Vec<f64>> = emb.iter().map(Value::as_f64).collect();
                let v = v.ok_or_else(|| fail(format!("data[{pos}] has non-numeric components"), false))?;
                if idx >= vectors.len() {
                    return Err(fail(format!("data[{pos}] index {idx} out of range"), false));
                }
                vectors[idx] = Some(v);
            }
            for (i, v) in vectors.into_iter().enumerate() {
                out.push(v.ok_or_else(|| RetrievalError::Embed {
                    index: first + i,
                    message: "missing from response".into(),
                    retryable: false,
                })?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_normalised() {
        let e = HashingEmbedder::new(512, 0);
        let v = e.embed(&["a".into(), "a".into()]).unwrap();
        assert_eq!(v[0], v[1]);
        let norm: f64 = v[0].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let e = HashingEmbedder::new(512, 0);
        let v = e.embed_one("");
        assert_eq!(v.len(), 512);
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn distinct_texts_differ() {
        let e = HashingEmbedder::new(512, 0);
        let corpus: Vec<String> = [
            "abc",
            "abd",
            "the cat",
            "the hat",
            "Lakers",
            "Heat",
            "Miami Heat",
            "Los Angeles Lakers",
        ]
        .map(String::from)
        .to_vec();
        let vs = e.embed(&corpus).unwrap();
        for i in 0..vs.len() {
            for j in (i + 1)..vs.len() {
                assert_ne!(vs[i], vs[j], "{:?} vs {:?}", corpus[i], corpus[j]);
            }
        }
    }

    #[test]
    fn seed_changes_hashing_and_case_does_not() {
        let a = HashingEmbedder::new(64, 1).embed_one("Miami Heat");
        let b = HashingEmbedder::new(64, 2).embed_one("Miami Heat");
        assert_ne!(a, b);
        assert_eq!(a, HashingEmbedder::new(64, 1).embed_one("MIAMI HEAT"));
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let texts: Vec<String> = (0..300).map(|i| format!("chunk number {i}")).collect();
        let seq = HashingEmbedder::new(512, 9)
            .with_exec(Exec::Sequential)
            .embed(&texts)
            .unwrap();
        let par = HashingEmbedder::new(512, 9)
            .with_exec(Exec::Parallel)
            .embed(&texts)
            .unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn embed_checks_dimension() {
        let e = HashingEmbedder::new(511, 0);
        assert!(matches!(embed(&["a".into()], &e, 512), Err(RetrievalError::Config(_))));
    }
}
