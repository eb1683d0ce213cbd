//! String-level answer metrics.

use std::collections::HashMap;

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercase, delete punctuation, collapse whitespace, drop one leading
/// article.
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let stripped: String = lowered
        .chars()
        .filter(|c| !(c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace())))
        .collect();
    let mut tokens: Vec<&str> = stripped.split_whitespace().collect();
    if tokens.len() > 1 && ARTICLES.contains(&tokens[0]) {
        tokens.remove(0);
    }
    tokens.join(" ")
}

/// Normalized equality with any gold name. An empty prediction never matches.
pub fn exact_match(pred: &str, gold_names: &[&str]) -> bool {
    let p = normalize_answer(pred);
    !p.is_empty() && gold_names.iter().any(|g| normalize_answer(g) == p)
}

fn f1_pair(pred: &str, gold: &str) -> f64 {
    let p = normalize_answer(pred);
    let g = normalize_answer(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    match (pt.is_empty(), gt.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &pt {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pt.len() as f64;
    let recall = overlap as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Best multiset token F1 over gold names. An empty gold list scores like a
/// single empty gold name.
pub fn token_f1(pred: &str, gold_names: &[&str]) -> f64 {
    if gold_names.is_empty() {
        return f1_pair(pred, "");
    }
    gold_names.iter().map(|g| f1_pair(pred, g)).fold(0.0, f64::max)
}

/// Split a list-valued prediction on commas, semicolons, newlines and the
/// word "and". Empty items and normalized duplicates are dropped.
pub fn split_items(pred: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for part in pred.split([',', ';', '\n']) {
        let words: Vec<&str> = part.split_whitespace().collect();
        for item in words.split(|w| w.eq_ignore_ascii_case("and")) {
            let item = item.join(" ");
            let key = normalize_answer(&item);
            if !key.is_empty() && seen.insert(key) {
                out.push(item);
            }
        }
    }
    out
}

/// F1 between predicted items and gold names, each prediction matched
/// greedily to the first unmatched gold name it exactly matches.
pub fn set_f1(pred_items: &[String], gold_names: &[&str]) -> f64 {
    let mut golds: Vec<&str> = Vec::new();
    for g in gold_names {
        if !normalize_answer(g).is_empty() && !golds.iter().any(|h| normalize_answer(h) == normalize_answer(g)) {
            golds.push(g);
        }
    }
    let mut preds: Vec<&str> = Vec::new();
    for p in pred_items {
        if !normalize_answer(p).is_empty() && !preds.iter().any(|q| normalize_answer(q) == normalize_answer(p)) {
            preds.push(p);
        }
    }
    match (preds.is_empty(), golds.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut used = vec![false; golds.len()];
    let mut tp = 0usize;
    for p in &preds {
        if let Some(j) = (0..golds.len()).find(|&j| !used[j] && exact_match(p, &[golds[j]])) {
            used[j] = true;
            tp += 1;
        }
    }
    if tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / preds.len() as f64;
    let recall = tp as f64 / golds.len() as f64;
    2.0 * precision * recall / (precision + recall)
}
