use std::cmp::Ordering;

use driftqa_core::retrieval::{
    cosine, split_recursive, Chunk, EmbeddedChunk, FlatIndex, HashingEmbedder, RetrievalConfig, RetrievalError,
};
use driftqa_core::Exec;
use proptest::prelude::*;

fn piece() -> impl Strategy<Value = String> {
    prop_oneof![
        4 => "[a-z]{1,12}",
        2 => Just(" ".to_string()),
        1 => Just(". ".to_string()),
        1 => Just("\n".to_string()),
        1 => Just("\n\n".to_string()),
        1 => "[a-zé ü]{40,700}",
        1 => "[ü€😀]{1,5}",
    ]
}

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(piece(), 0..300).prop_map(|v| v.concat())
}

/// Sort by start, drop each chunk's overlap with the previous one, concatenate.
fn de_overlap(text_len: usize, chunks: &[Chunk], max_overlap: usize) -> Result<String, String> {
    let mut chunks: Vec<&Chunk> = chunks.iter().collect();
    chunks.sort_by_key(|c| (c.start, c.end));
    let mut out = String::new();
    let mut covered = 0usize;
    for c in chunks {
        if c.start > covered {
            return Err(format!("gap before {}", c.start));
        }
        let overlap = covered - c.start;
        if overlap > max_overlap {
            return Err(format!("overlap {overlap} at {}", c.start));
        }
        if c.end <= covered {
            return Err(format!("chunk {}..{} adds nothing", c.start, c.end));
        }
        out.extend(c.text.chars().skip(overlap));
        covered = c.end;
    }
    if covered != text_len {
        return Err(format!("covered {covered} of {text_len}"));
    }
    Ok(out)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn chunks_are_bounded_and_tile_the_text(t in text()) {
        let cfg = RetrievalConfig::default();
        let chunks = split_recursive("d", &t, &cfg);
        let n = t.chars().count();
        for c in &chunks {
            prop_assert!(c.end - c.start <= cfg.chunk_size);
            prop_assert_eq!(c.text.chars().count(), c.end - c.start);
            prop_assert!(!c.text.is_empty());
        }
        if n == 0 {
            prop_assert!(chunks.is_empty());
        } else {
            let rebuilt = de_overlap(n, &chunks, cfg.overlap).map_err(TestCaseError::fail)?;
            prop_assert_eq!(rebuilt, t);
        }
    }

    #[test]
    fn small_configs_also_tile(t in text(), size in 1usize..40, overlap in 0usize..20) {
        let cfg = RetrievalConfig { chunk_size: size, overlap: overlap.min(size.saturating_sub(1)), ..RetrievalConfig::default() };
        let chunks = split_recursive("d", &t, &cfg);
        for c in &chunks {
            prop_assert!(c.end - c.start <= size);
        }
        if !t.is_empty() {
            let rebuilt = de_overlap(t.chars().count(), &chunks, cfg.overlap).map_err(TestCaseError::fail)?;
            prop_assert_eq!(rebuilt, t);
        }
    }

    #[test]
    fn cosine_is_symmetric_and_scale_invariant(
        pair in (1usize..32).prop_flat_map(|d| (
            prop::collection::vec(-100.0f64..100.0, d),
            prop::collection::vec(-100.0f64..100.0, d),
        )),
        alpha in 0.001f64..1000.0,
    ) {
        let (u, v) = pair;
        match (cosine(&u, &v), cosine(&v, &u)) {
            (Ok(a), Ok(b)) => {
                prop_assert!((a - b).abs() <= 1e-12);
                prop_assert!((-1.0..=1.0).contains(&a));
                let scaled: Vec<f64> = u.iter().map(|x| x * alpha).collect();
                let c = cosine(&scaled, &v).unwrap();
                prop_assert!((a - c).abs() <= 1e-9, "{} vs {}", a, c);
            }
            (Err(RetrievalError::ZeroVector), Err(RetrievalError::ZeroVector)) => {}
            other => prop_assert!(false, "asymmetric outcome {:?}", other),
        }
    }
}

fn oracle_top_k(entries: &[EmbeddedChunk], q: &[f64], k: usize) -> Vec<(String, usize, f64)> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let qn = dot(q, q).sqrt();
    let mut scored: Vec<(usize, f64)> = entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            (
                i,
                (dot(q, &e.vector) / (qn * dot(&e.vector, &e.vector).sqrt())).clamp(-1.0, 1.0),
            )
        })
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| entries[a.0].chunk.doc_id.cmp(&entries[b.0].chunk.doc_id))
            .then_with(|| entries[a.0].chunk.start.cmp(&entries[b.0].chunk.start))
            .then_with(|| a.0.cmp(&b.0))
    });
    scored
        .into_iter()
        .take(k)
        .map(|(i, s)| (entries[i].chunk.doc_id.clone(), i, s))
        .collect()
}

fn entry_strategy(dim: usize) -> impl Strategy<Value = (u8, usize, Vec<i8>)> {
    (0u8..4, 0usize..5, prop::collection::vec(-2i8..=2, dim))
        .prop_filter("non-zero", |(_, _, v)| v.iter().any(|&x| x != 0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn top_k_matches_brute_force(
        raw in prop::collection::vec(entry_strategy(6), 1..120),
        q in prop::collection::vec(-2i8..=2, 6).prop_filter("non-zero", |v| v.iter().any(|&x| x != 0)),
        k in 1usize..20,
        parallel in any::<bool>(),
    ) {
        let entries: Vec<EmbeddedChunk> = raw
            .iter()
            .map(|(doc, start, v)| {
                let chunk = Chunk { doc_id: format!("doc{doc}"), start: *start, end: start + 1, text: "x".into() };
                EmbeddedChunk::new(chunk, v.iter().map(|&x| f64::from(x)).collect()).unwrap()
            })
            .collect();
        let exec = if parallel { Exec::Parallel } else { Exec::Sequential };
        let mut index = FlatIndex::new(6).with_exec(exec);
        index.add(entries.clone()).unwrap();
        let q: Vec<f64> = q.iter().map(|&x| f64::from(x)).collect();
        let got = index.query_top_k(&q, k).unwrap();
        let want = oracle_top_k(&entries, &q, k);
        prop_assert_eq!(got.len(), want.len());
        for (g, (doc, i, s)) in got.iter().zip(&want) {
            prop_assert!(std::ptr::eq(g.chunk, &index.entries()[*i]), "rank mismatch for {}", doc);
            prop_assert!((g.score - s).abs() <= 1e-12);
        }
    }
}

#[test]
fn index_save_load_preserves_queries() {
    let embedder = HashingEmbedder::new(64, 7);
    let texts = [
        "Miami Heat",
        "Los Angeles Lakers",
        "Cleveland Cavaliers",
        "Tottenham Hotspur",
    ];
    let entries: Vec<EmbeddedChunk> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let chunk = Chunk {
                doc_id: format!("d{i}"),
                start: 0,
                end: t.chars().count(),
                text: t.to_string(),
            };
            EmbeddedChunk::new(chunk, embedder.embed_one(t)).unwrap()
        })
        .collect();
    let mut index = FlatIndex::new(64);
    index.add(entries).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("index.json");
    index.save(&path).unwrap();
    let loaded = FlatIndex::load(&path).unwrap();
    let q = embedder.embed_one("Lakers");
    let a: Vec<(String, f64)> = index
        .query_top_k(&q, 3)
        .unwrap()
        .iter()
        .map(|s| (s.chunk.chunk.id(), s.score))
        .collect();
    let b: Vec<(String, f64)> = loaded
        .query_top_k(&q, 3)
        .unwrap()
        .iter()
        .map(|s| (s.chunk.chunk.id(), s.score))
        .collect();
    assert_eq!(a, b);
    assert_eq!(a[0].0, "d1#0");
}

#[test]
fn rejected_batch_leaves_index_unchanged() {
    let mut index = FlatIndex::new(2);
    let ok = EmbeddedChunk::new(
        Chunk {
            doc_id: "a".into(),
            start: 0,
            end: 1,
            text: "a".into(),
        },
        vec![1.0, 0.0],
    )
    .unwrap();
    let zero = EmbeddedChunk {
        chunk: Chunk {
            doc_id: "b".into(),
            start: 0,
            end: 1,
            text: "b".into(),
        },
        vector: vec![0.0, 0.0],
    };
    assert!(matches!(index.add(vec![ok, zero]), Err(RetrievalError::ZeroVector)));
    assert!(index.is_empty());
    assert!(matches!(
        index.query_top_k(&[1.0, 0.0], 1),
        Err(RetrievalError::EmptyIndex)
    ));
}
