//! Recursive character splitting with exact character offsets.
//!
//! The text is split on the coarsest separator that applies (paragraph
//! break, newline, sentence end followed by a space, space, and finally
//! single characters). Separators stay attached to the piece they end, so
//! pieces always tile the text. Adjacent pieces are merged greedily up to
//! `chunk_size`; when a chunk is emitted, a tail of whole pieces no longer
//! than `overlap` is carried into the next one. A piece longer than
//! `chunk_size` is split again with the next finer separator.

use std::collections::VecDeque;

use super::{Chunk, RetrievalConfig};

#[derive(Debug, Clone, Copy)]
enum Separator {
    Paragraph,
    Newline,
    Sentence,
    Space,
    Char,
}

const HIERARCHY: [Separator; 5] = [
    Separator::Paragraph,
    Separator::Newline,
    Separator::Sentence,
    Separator::Space,
    Separator::Char,
];

/// Split `text` into chunks of at most `cfg.chunk_size` characters.
pub fn split_recursive(doc_id: &str, text: &str, cfg: &RetrievalConfig) -> Vec<Chunk> {
    let chars: Vec<char> = text.chars().collect();
    let chunk_size = cfg.chunk_size.max(1);
    let overlap = cfg.overlap.min(chunk_size - 1);
    let mut spans = Vec::new();
    if chars.is_empty() {
        return Vec::new();
    }
    if chars.len() <= chunk_size {
        spans.push((0, chars.len()));
    } else {
        split_span(&chars, 0, chars.len(), 0, chunk_size, overlap, &mut spans);
    }
    spans
        .into_iter()
        .map(|(start, end)| Chunk {
            doc_id: doc_id.to_string(),
            start,
            end,
            text: chars[start..end].iter().collect(),
        })
        .collect()
}

fn split_span(
    chars: &[char],
    start: usize,
    end: usize,
    level: usize,
    chunk_size: usize,
    overlap: usize,
    out: &mut Vec<(usize, usize)>,
) {
    let pieces = pieces(chars, start, end, HIERARCHY[level]);
    let mut run: Vec<(usize, usize)> = Vec::new();
    for piece in pieces {
        if piece.1 - piece.0 <= chunk_size {
            run.push(piece);
        } else {
            merge(&run, chunk_size, overlap, out);
            run.clear();
            split_span(chars, piece.0, piece.1, level + 1, chunk_size, overlap, out);
        }
    }
    merge(&run, chunk_size, overlap, out);
}

/// Pieces tiling `[start, end)`, each ending just after a separator.
fn pieces(chars: &[char], start: usize, end: usize, sep: Separator) -> Vec<(usize, usize)> {
    if let Separator::Char = sep {
        return (start..end).map(|i| (i, i + 1)).collect();
    }
    let mut out = Vec::new();
    let mut piece_start = start;
    let mut i = start;
    while i < end {
        let sep_len = match sep {
            Separator::Paragraph => usize::from(i + 1 < end && chars[i] == '\n' && chars[i + 1] == '\n') * 2,
            Separator::Newline => usize::from(chars[i] == '\n'),
            Separator::Sentence => {
                usize::from(i + 1 < end && matches!(chars[i], '.' | '!' | '?') && chars[i + 1] == ' ') * 2
            }
            Separator::Space => usize::from(chars[i] == ' '),
            Separator::Char => unreachable!(),
        };
        if sep_len > 0 {
            i += sep_len;
            out.push((piece_start, i));
            piece_start = i;
        } else {
            i += 1;
        }
    }
    if piece_start < end {
        out.push((piece_start, end));
    }
    out
}

fn merge(run: &[(usize, usize)], chunk_size: usize, overlap: usize, out: &mut Vec<(usize, usize)>) {
    let mut current: VecDeque<(usize, usize)> = VecDeque::new();
    let mut total = 0usize;
    for &piece in run {
        let len = piece.1 - piece.0;
        if total + len > chunk_size && !current.is_empty() {
            out.push((current[0].0, current[current.len() - 1].1));
            while total > overlap || (total + len > chunk_size && total > 0) {
                let front = current.pop_front().expect("total > 0 implies a piece");
                total -= front.1 - front.0;
            }
        }
        current.push_back(piece);
        total += len;
    }
    if let (Some(first), Some(last)) = (current.front(), current.back()) {
        out.push((first.0, last.1));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> RetrievalConfig {
        RetrievalConfig::default()
    }

    #[test]
    fn short_paragraph_is_one_chunk() {
        let text = "x".repeat(400);
        let chunks = split_recursive("d", &text, &cfg());
        assert_eq!(chunks.len(), 1);
        assert_eq!((chunks[0].start, chunks[0].end), (0, 400));
    }

    #[test]
    fn text_shorter_than_overlap() {
        let chunks = split_recursive("d", "tiny text", &cfg());
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].text, "tiny text");
    }

    #[test]
    fn word_tokens_overlap_within_bounds() {
        let text = "word ".repeat(200);
        assert_eq!(text.len(), 1000);
        let chunks = split_recursive("d", &text, &cfg());
        assert!(chunks.len() >= 3);
        for c in &chunks {
            assert!(c.len() <= 500);
        }
        for pair in chunks.windows(2) {
            let shared = pair[0].end.saturating_sub(pair[1].start);
            assert!((1..=50).contains(&shared), "shared {shared}");
        }
        assert_eq!(chunks[0].start, 0);
        assert_eq!(chunks.last().unwrap().end, 1000);
    }

    #[test]
    fn single_long_token_splits_by_characters() {
        let text = "a".repeat(1000);
        let chunks = split_recursive("d", &text, &cfg());
        for pair in chunks.windows(2) {
            assert_eq!(pair[0].end - pair[1].start, 50);
        }
    }

    #[test]
    fn offsets_are_characters_not_bytes() {
        let text = "é".repeat(700);
        let chunks = split_recursive("d", &text, &cfg());
        assert_eq!(chunks[0].end, 500);
        assert_eq!(chunks[0].text.chars().count(), 500);
    }

    #[test]
    fn paragraphs_preferred_over_words() {
        let para = format!("{}\n\n", "w ".repeat(150));
        let text = para.repeat(3);
        let chunks = split_recursive("d", &text, &cfg());
        // Two 302-char paragraphs do not fit together; each stays whole.
        assert_eq!(chunks.len(), 3);
        assert!(chunks.iter().all(|c| c.len() == 302));
    }
}
