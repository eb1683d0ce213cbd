//! Temporal fact store keyed by normalized (subject, relation).
//!
//! For every key and object the store keeps a set of disjoint,
//! non-adjacent year spans: inserting a fact whose span touches an
//! existing one for the same object widens that span instead of adding a
//! second entry. Different objects under one key are all kept, since many
//! relations are multi-valued over time.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{normalize_key, EvidenceBundle, Provenance, TemporalFact};

pub const KB_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FactKey {
    pub subject_key: String,
    pub relation_key: String,
}

impl FactKey {
    /// Normalizes both parts; `None` if either is empty afterwards.
    pub fn new(subject: &str, relation: &str) -> Option<Self> {
        let subject_key = normalize_key(subject);
        let relation_key = normalize_key(relation);
        (!subject_key.is_empty() && !relation_key.is_empty()).then_some(Self {
            subject_key,
            relation_key,
        })
    }

    pub fn of(fact: &TemporalFact) -> Self {
        Self {
            subject_key: fact.subject().to_string(),
            relation_key: fact.relation().to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpsertOutcome {
    Inserted,
    MergedDuplicate,
    ExtendedRange,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbStats {
    pub fact_count: usize,
    pub subject_count: usize,
    pub relation_count: usize,
    pub dedup_merges: usize,
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("knowledge base format version {found} needs migration to {expected}")]
    MigrationRequired { found: u32, expected: u32 },
    #[error("knowledge base integrity error at line {line}: {reason}")]
    Integrity { line: usize, reason: String },
    #[error("knowledge base I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Span bounds with open ends mapped to infinities.
fn lo(f: &TemporalFact) -> i64 {
    f.start_year().map_or(i64::MIN, i64::from)
}
fn hi(f: &TemporalFact) -> i64 {
    f.end_year().map_or(i64::MAX, i64::from)
}

fn touches(a: &TemporalFact, b: &TemporalFact) -> bool {
    lo(a) <= hi(b).saturating_add(1) && lo(b) <= hi(a).saturating_add(1)
}

fn sort_key(f: &TemporalFact) -> (i64, String, i64) {
    (lo(f), f.object().to_string(), hi(f))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeBase {
    facts: BTreeMap<FactKey, Vec<TemporalFact>>,
    aliases: BTreeMap<String, String>,
    dedup_merges: usize,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    /// Map known subject variants to a canonical subject before storing or
    /// querying. Keys and values are normalized.
    pub fn with_aliases(mut self, aliases: impl IntoIterator<Item = (String, String)>) -> Self {
        self.aliases = aliases
            .into_iter()
            .map(|(k, v)| (normalize_key(&k), normalize_key(&v)))
            .collect();
        self
    }

    fn canonical_subject(&self, subject_key: &str) -> String {
        self.aliases
            .get(subject_key)
            .cloned()
            .unwrap_or_else(|| subject_key.to_string())
    }

    fn canonical_key(&self, key: &FactKey) -> FactKey {
        FactKey {
            subject_key: self.canonical_subject(&key.subject_key),
            relation_key: key.relation_key.clone(),
        }
    }

    pub fn upsert_fact(&mut self, fact: TemporalFact) -> UpsertOutcome {
        let key = self.canonical_key(&FactKey::of(&fact));
        let mut fact = if key.subject_key != fact.subject() {
            let mut f = TemporalFact::new(
                &key.subject_key,
                fact.relation(),
                fact.object(),
                fact.start_year(),
                fact.end_year(),
            )
            .expect("canonical subject is non-empty");
            *f.provenance_mut() = fact.provenance().to_vec();
            f
        } else {
            fact
        };
        normalize_provenance(fact.provenance_mut());
        let object_key = normalize_key(fact.object());
        let bucket = self.facts.entry(key).or_default();

        if let Some(existing) = bucket.iter_mut().find(|f| {
            normalize_key(f.object()) == object_key
                && f.start_year() == fact.start_year()
                && f.end_year() == fact.end_year()
        }) {
            let mut provenance = existing.provenance().to_vec();
            provenance.extend(fact.provenance().iter().cloned());
            if fact.object() < existing.object() {
                *existing = fact;
            }
            *existing.provenance_mut() = provenance;
            normalize_provenance(existing.provenance_mut());
            bucket.sort_by_key(sort_key);
            self.dedup_merges += 1;
            return UpsertOutcome::MergedDuplicate;
        }

        let mut merged_any = false;
        while let Some(pos) = bucket
            .iter()
            .position(|f| normalize_key(f.object()) == object_key && touches(f, &fact))
        {
            let other = bucket.remove(pos);
            let start = if lo(&other) <= lo(&fact) {
                other.start_year()
            } else {
                fact.start_year()
            };
            let end = if hi(&other) >= hi(&fact) {
                other.end_year()
            } else {
                fact.end_year()
            };
            let object = other.object().min(fact.object()).to_string();
            let mut provenance = other.provenance().to_vec();
            provenance.extend(fact.provenance().iter().cloned());
            let mut widened = TemporalFact::new(fact.subject(), fact.relation(), &object, start, end)
                .expect("union of valid spans is valid");
            widened.set_span(start, end);
            *widened.provenance_mut() = provenance;
            normalize_provenance(widened.provenance_mut());
            fact = widened;
            merged_any = true;
        }
        bucket.push(fact);
        bucket.sort_by_key(sort_key);
        if merged_any {
            UpsertOutcome::ExtendedRange
        } else {
            UpsertOutcome::Inserted
        }
    }

    /// Facts under `key`, optionally restricted to spans containing
    /// `time_filter`, sorted by start year then object.
    pub fn query(&self, key: &FactKey, time_filter: Option<i32>) -> Vec<TemporalFact> {
        let key = self.canonical_key(key);
        let mut out: Vec<TemporalFact> = self
            .facts
            .get(&key)
            .map(|b| {
                b.iter()
                    .filter(|f| time_filter.is_none_or(|y| f.contains_year(y)))
                    .cloned()
                    .collect()
            })
            .unwrap_or_default();
        out.sort_by_key(sort_key);
        out
    }

    /// Every fact about a subject regardless of relation.
    pub fn query_subject(&self, subject: &str, time_filter: Option<i32>) -> Vec<TemporalFact> {
        let subject_key = self.canonical_subject(&normalize_key(subject));
        let mut out: Vec<TemporalFact> = self
            .facts
            .iter()
            .filter(|(k, _)| k.subject_key == subject_key)
            .flat_map(|(_, b)| b.iter())
            .filter(|f| time_filter.is_none_or(|y| f.contains_year(y)))
            .cloned()
            .collect();
        out.sort_by(|a, b| {
            sort_key(a)
                .cmp(&sort_key(b))
                .then_with(|| a.relation().cmp(b.relation()))
        });
        out
    }

    pub fn facts(&self) -> impl Iterator<Item = &TemporalFact> {
        self.facts.values().flatten()
    }

    pub fn keys(&self) -> impl Iterator<Item = &FactKey> {
        self.facts.keys()
    }

    pub fn stats(&self) -> KbStats {
        let subjects: BTreeSet<&str> = self.facts.keys().map(|k| k.subject_key.as_str()).collect();
        let relations: BTreeSet<&str> = self.facts.keys().map(|k| k.relation_key.as_str()).collect();
        KbStats {
            fact_count: self.facts.values().map(Vec::len).sum(),
            subject_count: subjects.len(),
            relation_count: relations.len(),
            dedup_merges: self.dedup_merges,
        }
    }

    /// JSON lines: a header `{format_version, created_at, stats}` followed
    /// by one fact per line.
    pub fn save_to<W: Write>(&self, mut out: W, created_at: &str) -> Result<(), KbError> {
        let header = serde_json::json!({
            "format_version": KB_FORMAT_VERSION,
            "created_at": created_at,
            "stats": self.stats(),
        });
        writeln!(out, "{header}")?;
        for fact in self.facts() {
            writeln!(out, "{}", serde_json::to_string(fact).expect("facts serialize"))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path, created_at: &str) -> Result<(), KbError> {
        let file = std::fs::File::create(path)?;
        self.save_to(std::io::BufWriter::new(file), created_at)
    }

    pub fn load_from<R: BufRead>(input: R) -> Result<Self, KbError> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
            stats: KbStats,
        }
        let mut lines = input.lines();
        let first = match lines.next() {
            Some(line) => line?,
            None => {
                return Err(KbError::Integrity {
                    line: 1,
                    reason: "missing header".into(),
                })
            }
        };
        let raw: serde_json::Value = serde_json::from_str(&first).map_err(|e| KbError::Integrity {
            line: 1,
            reason: e.to_string(),
        })?;
        if let Some(v) = raw.get("format_version").and_then(serde_json::Value::as_u64) {
            if v != u64::from(KB_FORMAT_VERSION) {
                return Err(KbError::MigrationRequired {
                    found: v as u32,
                    expected: KB_FORMAT_VERSION,
                });
            }
        }
        let header: Header = serde_json::from_value(raw).map_err(|e| KbError::Integrity {
            line: 1,
            reason: e.to_string(),
        })?;
        debug_assert_eq!(header.format_version, KB_FORMAT_VERSION);
        let mut kb = KnowledgeBase::new();
        let mut count = 0usize;
        let mut line_no = 1usize;
        for line in lines {
            line_no += 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fact: TemporalFact = serde_json::from_str(&line).map_err(|e| KbError::Integrity {
                line: line_no,
                reason: e.to_string(),
            })?;
            kb.upsert_fact(fact);
            count += 1;
        }
        if count != header.stats.fact_count {
            return Err(KbError::Integrity {
                line: line_no + 1,
                reason: format!("header declares {} facts but file has {count}", header.stats.fact_count),
            });
        }
        kb.dedup_merges = header.stats.dedup_merges;
        Ok(kb)
    }

    pub fn load(path: &Path) -> Result<Self, KbError> {
        let file = std::fs::File::open(path)?;
        Self::load_from(std::io::BufReader::new(file))
    }
}

fn normalize_provenance(p: &mut Vec<Provenance>) {
    p.sort();
    p.dedup();
}

/// What an extractor found in one text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extraction {
    pub facts: Vec<TemporalFact>,
    pub skipped_lines: usize,
    pub warning: Option<String>,
}

/// Source of facts about a subject in a text: an LLM prompt or a
/// rule-based stand-in.
pub trait FactExtractor: Send + Sync {
    fn extract(&self, text: &str, subject: &str) -> Result<Extraction, String>;
}

/// Deterministic extractor for statements written one per line as
/// `<subject> <phrase> <object> (from YYYY to YYYY | since YYYY | in YYYY).`
/// where each phrase maps to a relation.
#[derive(Debug, Clone)]
pub struct RuleExtractor {
    rules: Vec<(regex::Regex, String)>,
}

impl RuleExtractor {
    pub fn new<'a>(phrases: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let rules = phrases
            .into_iter()
            .map(|(phrase, relation)| {
                let re = format!(
                    r"^(?P<s>.+?)\s+{}\s+(?P<o>.+?)\s+(?:from (?P<a>\d{{4}}) to (?P<b>\d{{4}})|since (?P<c>\d{{4}})|in (?P<d>\d{{4}}))\.?$",
                    regex::escape(phrase)
                );
                (regex::Regex::new(&re).expect("escaped phrase"), relation.to_string())
            })
            .collect();
        Self { rules }
    }
}

impl FactExtractor for RuleExtractor {
    fn extract(&self, text: &str, _subject: &str) -> Result<Extraction, String> {
        let mut out = Extraction::default();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let Some((caps, relation)) = self.rules.iter().find_map(|(re, r)| re.captures(line).map(|c| (c, r))) else {
                continue;
            };
            let year = |k: &str| caps.name(k).and_then(|m| m.as_str().parse::<i32>().ok());
            let (start, end) = match (year("a"), year("b"), year("c"), year("d")) {
                (Some(a), Some(b), _, _) => (Some(a), Some(b)),
                (_, _, Some(c), _) => (Some(c), None),
                (_, _, _, Some(d)) => (Some(d), Some(d)),
                _ => continue,
            };
            match TemporalFact::new(&caps["s"], relation, &caps["o"], start, end) {
                Ok(f) => out.facts.push(f),
                Err(_) => out.skipped_lines += 1,
            }
        }
        Ok(out)
    }
}

/// Change in the store caused by ingesting one evidence bundle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestDelta {
    pub segments: usize,
    pub extracted: usize,
    pub inserted: usize,
    pub merged_duplicate: usize,
    pub extended_range: usize,
    pub dropped_mismatched: usize,
    pub skipped_lines: usize,
    pub fact_count_before: usize,
    pub fact_count_after: usize,
}

impl IngestDelta {
    pub fn fact_count_delta(&self) -> isize {
        self.fact_count_after as isize - self.fact_count_before as isize
    }
}

#[derive(Debug, Error)]
#[error("extraction failed on segment {segment}: {message}")]
pub struct IngestError {
    pub segment: usize,
    pub message: String,
    /// Segments before the failing one are already stored.
    pub partial: IngestDelta,
}

/// Extract facts from every text of `doc` and store those about `subject`.
///
/// Each text is all-or-nothing: its facts are collected first and only
/// stored if extraction succeeded. Facts about other subjects are dropped.
pub fn ingest_document(
    kb: &mut KnowledgeBase,
    doc: &EvidenceBundle,
    subject: &str,
    extractor: &dyn FactExtractor,
) -> Result<IngestDelta, IngestError> {
    let subject_key = kb.canonical_subject(&normalize_key(subject));
    let mut delta = IngestDelta {
        fact_count_before: kb.stats().fact_count,
        ..IngestDelta::default()
    };
    for (i, text) in doc.texts().iter().enumerate() {
        let extraction = extractor.extract(&text.text, subject).map_err(|message| IngestError {
            segment: i,
            message,
            partial: IngestDelta {
                fact_count_after: kb.stats().fact_count,
                ..delta
            },
        })?;
        delta.segments += 1;
        delta.extracted += extraction.facts.len();
        delta.skipped_lines += extraction.skipped_lines;
        let doc_id = doc.doc_id(i);
        let doc_len = text.text.chars().count();
        for fact in extraction.facts {
            if kb.canonical_subject(fact.subject()) != subject_key {
                tracing::debug!(subject = fact.subject(), expected = %subject_key, "dropping fact about another subject");
                delta.dropped_mismatched += 1;
                continue;
            }
            let in_bounds = !fact.provenance().is_empty()
                && fact
                    .provenance()
                    .iter()
                    .all(|p| p.doc_id == doc_id && p.start <= p.end && p.end <= doc_len);
            let fact = if in_bounds {
                fact
            } else {
                let bare = TemporalFact::new(
                    fact.subject(),
                    fact.relation(),
                    fact.object(),
                    fact.start_year(),
                    fact.end_year(),
                )
                .expect("already valid");
                bare.with_provenance(doc_id.clone(), 0, doc_len, doc_len)
                    .expect("whole text span")
            };
            match kb.upsert_fact(fact) {
                UpsertOutcome::Inserted => delta.inserted += 1,
                UpsertOutcome::MergedDuplicate => delta.merged_duplicate += 1,
                UpsertOutcome::ExtendedRange => delta.extended_range += 1,
            }
        }
    }
    delta.fact_count_after = kb.stats().fact_count;
    Ok(delta)
}
