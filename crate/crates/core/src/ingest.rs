//! Turning raw page dumps and news articles into model-ready evidence.
//!
//! Cleaning runs in two passes. [`strip_structured`] drops wiki tables and
//! list lines; [`standardize_characters`] removes links, markup, citations,
//! URLs and escape sequences using the rules in a [`PatternTable`]. Both
//! passes only ever delete or shorten text.
//!
//! Evidence is checked for the gold answer after cleaning, so the text a
//! model sees is the text that was checked.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use chrono::{Datelike, NaiveDate};
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::exec::Exec;
use crate::llm::{self, LlmBackend, TaskId, TemplateSet};
use crate::model::{
    normalize_key, BenchmarkEvent, Dump, EvidenceBundle, EvidenceMode, EvidenceText, GoldAnswer, Incident,
    ARTICLES_KEY, CORPUS_KEY, UNIFIED_CORPUS,
};

const DEFAULT_PATTERNS: &str = include_str!("../assets/patterns.txt");

/// Upper bound on whole-table passes; each productive pass shortens the text.
const MAX_PASSES: usize = 64;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("pattern table line {line}: {reason}")]
    PatternTable { line: usize, reason: String },
    #[error("articles for different entities in one document: `{first}` and `{second}`")]
    MixedEntities { first: String, second: String },
    #[error("no articles to build a document from")]
    NoArticles,
    #[error("line {line}: {reason}")]
    BadRecord { line: usize, reason: String },
    #[error("event {event_id}: {reason}")]
    BadEvent { event_id: i64, reason: String },
}

/// Counters describing what cleaning removed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub removed_structured_blocks: usize,
    pub removed_artifact_count: usize,
    pub input_chars: usize,
    pub output_chars: usize,
}

impl CleanReport {
    /// Combine the reports of two sequential passes.
    pub fn then(self, next: CleanReport) -> CleanReport {
        CleanReport {
            removed_structured_blocks: self.removed_structured_blocks + next.removed_structured_blocks,
            removed_artifact_count: self.removed_artifact_count + next.removed_artifact_count,
            input_chars: self.input_chars,
            output_chars: next.output_chars,
        }
    }
}

fn is_list_line(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with('*') || t.starts_with('#') || t.starts_with('-') || t.starts_with('•')
}

fn opens_table(line: &str) -> bool {
    line.trim_start().starts_with("{|")
}

fn closes_table(line: &str) -> bool {
    line.trim_start().starts_with("|}")
}

/// Remove `{| ... |}` table blocks and list lines (`*`, `#`, `-`, `•`).
///
/// Each table block and each list line counts as one removed block. A
/// table opener without a matching close is left in place.
pub fn strip_structured(text: &str) -> (String, CleanReport) {
    let input_chars = text.chars().count();
    let lines: Vec<&str> = text.split('\n').collect();
    let mut kept: Vec<&str> = Vec::with_capacity(lines.len());
    let mut removed = 0usize;
    let mut i = 0usize;
    while i < lines.len() {
        let line = lines[i];
        if opens_table(line) {
            if let Some(close) = find_table_close(&lines, i) {
                removed += 1;
                i = close + 1;
                continue;
            }
        }
        if is_list_line(line) {
            removed += 1;
        } else {
            kept.push(line);
        }
        i += 1;
    }
    let out = kept.join("\n");
    let output_chars = out.chars().count();
    (
        out,
        CleanReport {
            removed_structured_blocks: removed,
            removed_artifact_count: 0,
            input_chars,
            output_chars,
        },
    )
}

fn find_table_close(lines: &[&str], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (j, line) in lines.iter().enumerate().skip(open) {
        if opens_table(line) {
            depth += 1;
        } else if closes_table(line) {
            depth -= 1;
            if depth == 0 {
                return Some(j);
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RuleKind {
    Delete,
    Keep,
    Escape,
}

#[derive(Debug, Clone)]
pub struct PatternRule {
    pub name: String,
    regex: Regex,
    kind: RuleKind,
}

impl PatternRule {
    pub fn pattern(&self) -> &str {
        self.regex.as_str()
    }
}

/// Ordered, versioned set of cleaning regexes.
#[derive(Debug, Clone)]
pub struct PatternTable {
    pub version: u32,
    rules: Vec<PatternRule>,
}

impl PatternTable {
    /// Parse the `name = regex` text format shipped in `assets/patterns.txt`.
    pub fn parse(text: &str) -> Result<Self, IngestError> {
        let mut version = None;
        let mut rules = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((name, pattern)) = line.split_once(" = ") else {
                return Err(IngestError::PatternTable {
                    line: line_no,
                    reason: "expected `name = pattern`".into(),
                });
            };
            let name = name.trim();
            if name == "version" {
                version = Some(pattern.trim().parse().map_err(|_| IngestError::PatternTable {
                    line: line_no,
                    reason: format!("bad version `{pattern}`"),
                })?);
                continue;
            }
            let regex =
                RegexBuilder::new(pattern)
                    .size_limit(1 << 24)
                    .build()
                    .map_err(|e| IngestError::PatternTable {
                        line: line_no,
                        reason: format!("rule `{name}`: {e}"),
                    })?;
            let names: BTreeSet<&str> = regex.capture_names().flatten().collect();
            let kind = if names.contains("esc") {
                RuleKind::Escape
            } else if names.contains("keep") {
                RuleKind::Keep
            } else {
                RuleKind::Delete
            };
            rules.push(PatternRule {
                name: name.to_string(),
                regex,
                kind,
            });
        }
        let version = version.ok_or(IngestError::PatternTable {
            line: 0,
            reason: "missing `version = N` line".into(),
        })?;
        Ok(Self { version, rules })
    }

    pub fn rules(&self) -> &[PatternRule] {
        &self.rules
    }

    fn apply_once(&self, text: &str, artifacts: &mut usize) -> String {
        let mut cur = text.to_string();
        for rule in &self.rules {
            if !rule.regex.is_match(&cur) {
                continue;
            }
            let mut count = 0usize;
            let next = rule.regex.replace_all(&cur, |caps: &regex::Captures<'_>| {
                count += 1;
                match rule.kind {
                    RuleKind::Delete => String::new(),
                    RuleKind::Keep => caps.name("keep").map_or("", |m| m.as_str()).to_string(),
                    RuleKind::Escape => decode_escape(caps.name("esc").map_or("", |m| m.as_str())),
                }
            });
            *artifacts += count;
            cur = next.into_owned();
        }
        let decoded = html_escape::decode_html_entities(&cur);
        if decoded != cur {
            *artifacts += 1;
            cur = decoded.into_owned();
        }
        normalize_whitespace(&cur)
    }
}

impl Default for PatternTable {
    fn default() -> Self {
        static TABLE: OnceLock<PatternTable> = OnceLock::new();
        TABLE
            .get_or_init(|| PatternTable::parse(DEFAULT_PATTERNS).expect("bundled pattern table is valid"))
            .clone()
    }
}

fn decode_escape(esc: &str) -> String {
    match esc {
        "n" => "\n".into(),
        "t" => " ".into(),
        "r" => String::new(),
        "\"" | "'" | "/" | "\\" => esc.to_string(),
        _ if esc.len() == 5 && esc.starts_with('u') => u32::from_str_radix(&esc[1..], 16)
            .ok()
            .and_then(char::from_u32)
            .map(String::from)
            .unwrap_or_default(),
        _ => String::new(),
    }
}

/// Collapse horizontal whitespace to single spaces, trim every line, and
/// squeeze runs of more than two blank lines down to one.
fn normalize_whitespace(text: &str) -> String {
    let mut out: Vec<String> = Vec::new();
    let mut blank_run = 0usize;
    let flush = |out: &mut Vec<String>, run: usize| {
        let keep = if run > 2 { 1 } else { run };
        out.extend(std::iter::repeat_n(String::new(), keep));
    };
    for line in text.split('\n') {
        let collapsed = line.split_whitespace().collect::<Vec<_>>().join(" ");
        if collapsed.is_empty() {
            blank_run += 1;
        } else {
            flush(&mut out, blank_run);
            blank_run = 0;
            out.push(collapsed);
        }
    }
    flush(&mut out, blank_run);
    out.join("\n")
}

/// Strip links, markup, citation tags, bare URLs, escape sequences and
/// HTML entities with the default pattern table.
pub fn standardize_characters(text: &str) -> (String, CleanReport) {
    standardize_with(&PatternTable::default(), text)
}

pub fn standardize_with(table: &PatternTable, text: &str) -> (String, CleanReport) {
    let input_chars = text.chars().count();
    let mut artifacts = 0usize;
    let mut cur = text.to_string();
    for _ in 0..MAX_PASSES {
        let next = table.apply_once(&cur, &mut artifacts);
        if next == cur {
            break;
        }
        cur = next;
    }
    let output_chars = cur.chars().count();
    (
        cur,
        CleanReport {
            removed_structured_blocks: 0,
            removed_artifact_count: artifacts,
            input_chars,
            output_chars,
        },
    )
}

/// Both cleaning passes, repeated until neither changes the text. Removing
/// markup can expose a table opener or list marker at a line start.
pub fn clean_document(table: &PatternTable, text: &str) -> (String, CleanReport) {
    let (stripped, first) = strip_structured(text);
    let (mut cur, second) = standardize_with(table, &stripped);
    let mut report = first.then(second);
    for _ in 0..MAX_PASSES {
        let (stripped, a) = strip_structured(&cur);
        let (next, b) = standardize_with(table, &stripped);
        if next == cur {
            break;
        }
        report = report.then(a).then(b);
        cur = next;
    }
    (cur, report)
}

/// Organizational suffixes dropped to form answer aliases.
pub const DEFAULT_ALIAS_SUFFIXES: [&str; 6] = ["F.C.", "FC", "Inc.", "Ltd.", "CF", "SC"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasRules {
    pub suffixes: Vec<String>,
}

impl Default for AliasRules {
    fn default() -> Self {
        Self {
            suffixes: DEFAULT_ALIAS_SUFFIXES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl AliasRules {
    /// The name itself plus, when its last token is a listed suffix, the
    /// name without that token.
    pub fn aliases(&self, name: &str) -> Vec<String> {
        let mut out = vec![name.trim().to_string()];
        let tokens: Vec<&str> = name.split_whitespace().collect();
        if let Some((last, rest)) = tokens.split_last() {
            let last_key = normalize_key(last);
            if !rest.is_empty() && self.suffixes.iter().any(|s| normalize_key(s) == last_key) {
                let alias = rest.join(" ");
                let alias = alias.trim_end_matches(',').trim().to_string();
                if !alias.is_empty() {
                    out.push(alias);
                }
            }
        }
        out
    }
}

/// Character span `[start, end)` into a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceMatch {
    pub found: bool,
    pub spans: Vec<Span>,
}

/// Case-insensitive search for any gold name or its suffix-dropped alias.
/// Matches must sit on word boundaries; spans are character offsets.
pub fn surface_answer_check(doc: &str, answers: &[GoldAnswer]) -> SurfaceMatch {
    surface_answer_check_with(&AliasRules::default(), doc, answers)
}

pub fn surface_answer_check_with(rules: &AliasRules, doc: &str, answers: &[GoldAnswer]) -> SurfaceMatch {
    let mut byte_spans: BTreeSet<(usize, usize)> = BTreeSet::new();
    for answer in answers {
        for alias in rules.aliases(&answer.name) {
            let alias_key = normalize_key(&alias);
            if alias_key.is_empty() {
                continue;
            }
            let pattern = alias
                .split_whitespace()
                .map(regex::escape)
                .collect::<Vec<_>>()
                .join(r"\s+");
            let Ok(re) = RegexBuilder::new(&pattern).case_insensitive(true).build() else {
                continue;
            };
            for m in re.find_iter(doc) {
                let before_ok = doc[..m.start()]
                    .chars()
                    .next_back()
                    .is_none_or(|c| !c.is_alphanumeric());
                let after_ok = doc[m.end()..].chars().next().is_none_or(|c| !c.is_alphanumeric());
                if before_ok && after_ok && normalize_key(m.as_str()) == alias_key {
                    byte_spans.insert((m.start(), m.end()));
                }
            }
        }
    }
    // Drop spans nested inside a longer match (an alias inside its full name).
    let all: Vec<(usize, usize)> = byte_spans.into_iter().collect();
    let outer: Vec<(usize, usize)> = all
        .iter()
        .copied()
        .filter(|&(s, e)| !all.iter().any(|&(s2, e2)| (s2, e2) != (s, e) && s2 <= s && e <= e2))
        .collect();
    let spans: Vec<Span> = outer
        .into_iter()
        .map(|(s, e)| {
            let start = doc[..s].chars().count();
            Span {
                start,
                end: start + doc[s..e].chars().count(),
            }
        })
        .collect();
    SurfaceMatch {
        found: !spans.is_empty(),
        spans,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "detail", rename_all = "snake_case")]
pub enum SemanticVerdict {
    Supported,
    Unsupported,
    JudgeError(String),
}

/// Ask a judge model whether `doc` supports the gold answer. Transport
/// failures and unparseable replies are `JudgeError`, never `Unsupported`.
pub fn semantic_answer_check(
    doc: &str,
    question: &str,
    answers: &[GoldAnswer],
    judge: &dyn LlmBackend,
    templates: &TemplateSet,
) -> SemanticVerdict {
    let names = answers.iter().map(|a| a.name.as_str()).collect::<Vec<_>>().join("; ");
    let mut bindings = BTreeMap::new();
    bindings.insert("document".to_string(), doc.to_string());
    bindings.insert("question".to_string(), question.to_string());
    bindings.insert("answers".to_string(), names);
    let request = match templates.render(TaskId::SemanticCheck, &bindings) {
        Ok(r) => r,
        Err(e) => return SemanticVerdict::JudgeError(e.to_string()),
    };
    match judge.chat(TaskId::SemanticCheck, &request) {
        Ok(reply) => match llm::parse_yes_no(&reply.text) {
            Some(true) => SemanticVerdict::Supported,
            Some(false) => SemanticVerdict::Unsupported,
            None => SemanticVerdict::JudgeError(format!("unparseable reply: {}", excerpt(&reply.text))),
        },
        Err(e) => SemanticVerdict::JudgeError(e.to_string()),
    }
}

fn excerpt(s: &str) -> String {
    s.chars().take(120).collect()
}

/// One dated news article about an entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimestampedArticle {
    pub entity: String,
    pub timestamp: NaiveDate,
    pub text: String,
}

/// Read the `{entity, timestamp: "YYYY-MM-DD", text}` JSON-lines format.
pub fn read_articles_jsonl(text: &str) -> Result<Vec<TimestampedArticle>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let article: TimestampedArticle = serde_json::from_str(line).map_err(|e| IngestError::BadRecord {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if article.text.trim().is_empty() {
            return Err(IngestError::BadRecord {
                line: i + 1,
                reason: "article text is empty".into(),
            });
        }
        out.push(article);
    }
    Ok(out)
}

/// Concatenate one entity's articles in date order, each under a
/// `[YYYY-MM-DD]` header. The result does not depend on input order.
pub fn build_unified_document(articles: &[TimestampedArticle]) -> Result<EvidenceBundle, IngestError> {
    let first = articles.first().ok_or(IngestError::NoArticles)?;
    if let Some(other) = articles.iter().find(|a| a.entity != first.entity) {
        let (a, b) = if first.entity <= other.entity {
            (&first.entity, &other.entity)
        } else {
            (&other.entity, &first.entity)
        };
        return Err(IngestError::MixedEntities {
            first: a.clone(),
            second: b.clone(),
        });
    }
    let mut sorted: Vec<&TimestampedArticle> = articles.iter().collect();
    sorted.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.text.cmp(&b.text)));
    let texts = sorted
        .into_iter()
        .map(|a| EvidenceText {
            date: a.timestamp,
            text: a.text.clone(),
        })
        .collect();
    EvidenceBundle::new(EvidenceMode::Unified, first.entity.clone(), texts).map_err(|_| IngestError::NoArticles)
}

/// A list-valued question about an entity of an article corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnifiedQuestion {
    pub event_id: i64,
    pub entity: String,
    pub question: String,
    pub answer: Vec<GoldAnswer>,
}

pub fn read_unified_questions_jsonl(text: &str) -> Result<Vec<UnifiedQuestion>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: UnifiedQuestion = serde_json::from_str(line).map_err(|e| IngestError::BadRecord {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(q);
    }
    Ok(out)
}

/// Package article corpora as benchmark events.
///
/// Each question becomes an event with one incident, keyed by the year of
/// the entity's latest article. The rendered document goes in
/// `dump.body_par`; the dated articles are kept under the incident's
/// `articles` key so the evidence bundle can be rebuilt exactly.
pub fn build_unified_events(
    articles: &[TimestampedArticle],
    questions: &[UnifiedQuestion],
) -> Result<Vec<BenchmarkEvent>, IngestError> {
    let mut by_entity: BTreeMap<&str, Vec<TimestampedArticle>> = BTreeMap::new();
    for a in articles {
        by_entity.entry(a.entity.as_str()).or_default().push(a.clone());
    }
    let mut events = Vec::with_capacity(questions.len());
    for q in questions {
        let group = by_entity.get(q.entity.as_str()).ok_or_else(|| IngestError::BadEvent {
            event_id: q.event_id,
            reason: format!("no articles for entity `{}`", q.entity),
        })?;
        if q.answer.is_empty() {
            return Err(IngestError::BadEvent {
                event_id: q.event_id,
                reason: "answer list is empty".into(),
            });
        }
        let bundle = build_unified_document(group)?;
        let year = bundle
            .texts()
            .last()
            .map(|t| t.date.year())
            .expect("bundle is non-empty");
        let stored: Vec<Value> = bundle
            .texts()
            .iter()
            .map(|t| serde_json::json!({"timestamp": t.date.format("%Y-%m-%d").to_string(), "text": t.text}))
            .collect();
        let mut inc_extra = Map::new();
        inc_extra.insert(ARTICLES_KEY.into(), Value::Array(stored));
        let incident = Incident {
            q_year: year,
            map_year: year,
            question: q.question.clone(),
            answer: q.answer.clone(),
            dump: Dump {
                url: format!("unified:{}", q.entity),
                body_par: bundle.render(),
                infobox: BTreeMap::new(),
                extra: Map::new(),
            },
            ans_comp: None,
            llm_resp: None,
            extra: inc_extra,
        };
        let mut ev_extra = Map::new();
        ev_extra.insert(CORPUS_KEY.into(), Value::from(UNIFIED_CORPUS));
        ev_extra.insert("entity".into(), Value::from(q.entity.clone()));
        let mut incidents = BTreeMap::new();
        incidents.insert(format!("{year:04}"), incident);
        events.push(BenchmarkEvent {
            event_id: q.event_id,
            incidents,
            extra: ev_extra,
        });
    }
    Ok(events)
}

/// Rebuild the unified evidence bundle stored in an incident.
pub fn unified_bundle(event: &BenchmarkEvent, incident: &Incident) -> Result<EvidenceBundle, IngestError> {
    let bad = |reason: &str| IngestError::BadEvent {
        event_id: event.event_id,
        reason: reason.to_string(),
    };
    let entity = event
        .extra
        .get("entity")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| incident.dump.url.trim_start_matches("unified:").to_string());
    let stored = incident
        .extra
        .get(ARTICLES_KEY)
        .and_then(Value::as_array)
        .ok_or_else(|| bad("unified incident has no `articles` list"))?;
    let mut articles = Vec::with_capacity(stored.len());
    for item in stored {
        let timestamp = item
            .get("timestamp")
            .and_then(Value::as_str)
            .and_then(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok())
            .ok_or_else(|| bad("article without a valid timestamp"))?;
        let text = item
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("article without text"))?;
        articles.push(TimestampedArticle {
            entity: entity.clone(),
            timestamp,
            text: text.to_string(),
        });
    }
    build_unified_document(&articles)
}

/// Options for cleaning a benchmark corpus.
#[derive(Clone, Default)]
pub struct CurationOptions<'a> {
    pub patterns: PatternTable,
    pub aliases: AliasRules,
    pub check_answers: bool,
    /// Judge for the optional second verification step.
    pub semantic_judge: Option<(&'a dyn LlmBackend, &'a TemplateSet)>,
    pub exec: Exec,
}

/// Outcome for one incident dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationEntry {
    pub event_id: i64,
    pub year: String,
    pub report: CleanReport,
    /// Always `after_cleaning`: the answer check sees the cleaned text.
    pub check_stage: String,
    pub surface: Option<SurfaceMatch>,
    pub semantic: Option<SemanticVerdict>,
    pub passed: bool,
}

/// Clean every incident dump; with `check_answers`, incidents whose
/// cleaned text fails the answer check are dropped from the output.
pub fn curate_events(
    events: &[BenchmarkEvent],
    opts: &CurationOptions<'_>,
) -> (Vec<BenchmarkEvent>, Vec<CurationEntry>) {
    let jobs: Vec<(usize, &String, &Incident)> = events
        .iter()
        .enumerate()
        .flat_map(|(ei, ev)| ev.incidents.iter().map(move |(k, inc)| (ei, k, inc)))
        .collect();
    let results = opts.exec.map(&jobs, |&(ei, year, inc)| {
        let event = &events[ei];
        let (clean, report) = if event.is_unified() {
            let n = inc.dump.body_par.chars().count();
            (
                inc.dump.body_par.clone(),
                CleanReport {
                    input_chars: n,
                    output_chars: n,
                    ..CleanReport::default()
                },
            )
        } else {
            clean_document(&opts.patterns, &inc.dump.body_par)
        };
        let (surface, semantic, passed) = if opts.check_answers {
            let surface = surface_answer_check_with(&opts.aliases, &clean, &inc.answer);
            let semantic = opts
                .semantic_judge
                .map(|(judge, templates)| semantic_answer_check(&clean, &inc.question, &inc.answer, judge, templates));
            let passed = surface.found && semantic.as_ref().is_none_or(|v| *v == SemanticVerdict::Supported);
            (Some(surface), semantic, passed)
        } else {
            (None, None, true)
        };
        let entry = CurationEntry {
            event_id: event.event_id,
            year: year.clone(),
            report,
            check_stage: "after_cleaning".into(),
            surface,
            semantic,
            passed,
        };
        (clean, entry)
    });
    let mut out: Vec<BenchmarkEvent> = events
        .iter()
        .map(|e| BenchmarkEvent {
            incidents: BTreeMap::new(),
            ..e.clone()
        })
        .collect();
    let mut entries = Vec::with_capacity(results.len());
    for ((ei, year, inc), (clean, entry)) in jobs.into_iter().zip(results) {
        if entry.passed {
            let mut inc = inc.clone();
            inc.dump.body_par = clean;
            out[ei].incidents.insert(year.clone(), inc);
        }
        entries.push(entry);
    }
    (out, entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::MockBackend;

    #[test]
    fn strip_examples() {
        let (out, rep) = strip_structured("intro\n* item one\n* item two\noutro");
        assert_eq!(out, "intro\noutro");
        assert_eq!(rep.removed_structured_blocks, 2);

        let plain = "Just a paragraph.\nAnother line.";
        let (out, rep) = strip_structured(plain);
        assert_eq!(out, plain);
        assert_eq!(rep.removed_structured_blocks, 0);

        let (out, rep) = strip_structured("{|\n|cell\n|}");
        assert_eq!(out, "");
        assert_eq!(rep.removed_structured_blocks, 1);
    }

    #[test]
    fn strip_nested_and_unterminated_tables() {
        let (out, rep) = strip_structured("a\n{|\n{|\n|x\n|}\n|y\n|}\nb");
        assert_eq!(out, "a\nb");
        assert_eq!(rep.removed_structured_blocks, 1);
        let (out, _) = strip_structured("a\n{| open\ntext");
        assert_eq!(out, "a\n{| open\ntext");
        let (out, _) = strip_structured("x\n  # numbered\n • bullet\n- dash\ny");
        assert_eq!(out, "x\ny");
    }

    #[test]
    fn standardize_examples() {
        assert_eq!(standardize_characters("[[Los Angeles Lakers|Lakers]]").0, "Lakers");
        assert_eq!(standardize_characters("[[Zadar]]").0, "Zadar");
        assert_eq!(standardize_characters("plain sentence.").0, "plain sentence.");
        assert_eq!(
            standardize_characters("see https://en.wikipedia.org/wiki/X now").0,
            "see now"
        );
    }

    #[test]
    fn standardize_markup_forms() {
        let cases = [
            ("a<ref name=\"x\">Cite, p. 4</ref> b", "a b"),
            ("a<ref name=\"y\" /> b", "a b"),
            ("[http://example.com Example site] rocks", "Example site rocks"),
            ("[https://example.com] gone", "gone"),
            ("'''Bold''' and ''italic''", "Bold and italic"),
            ("x {{cite web|url=u|title=t}} y", "x y"),
            ("Tom &amp; Jerry &lt;3", "Tom & Jerry <3"),
            ("Modri\\u0107 said\\nhi", "Modrić said\nhi"),
            ("<b>bold</b> <!-- hidden --> text", "bold text"),
            ("a\n\n\n\n\nb", "a\n\nb"),
            ("a\n\n\nb", "a\n\n\nb"),
        ];
        for (input, want) in cases {
            let (out, rep) = standardize_characters(input);
            assert_eq!(out, want, "input {input:?}");
            assert!(rep.output_chars <= rep.input_chars);
        }
    }

    #[test]
    fn pattern_table_parses_and_rejects() {
        let t = PatternTable::default();
        assert_eq!(t.version, 1);
        assert!(t.rules().iter().any(|r| r.name == "wikilink"));
        assert!(PatternTable::parse("rule = (").is_err());
        assert!(PatternTable::parse("x = a").is_err()); // no version
        let custom = PatternTable::parse("version = 7\nfoo = foo").unwrap();
        assert_eq!(standardize_with(&custom, "a foo b").0, "a b");
    }

    #[test]
    fn surface_check_examples() {
        let gold = vec![GoldAnswer::new("Tottenham Hotspur F.C.", "Q18741")];
        let doc = "Modrić joined Tottenham Hotspur in 2008";
        let m = surface_answer_check(doc, &gold);
        assert!(m.found);
        let s = m.spans[0];
        let slice: String = doc.chars().skip(s.start).take(s.end - s.start).collect();
        assert_eq!(slice, "Tottenham Hotspur");

        let m = surface_answer_check("abc", &[GoldAnswer::new("xyz", "Q1")]);
        assert!(!m.found);
        assert!(m.spans.is_empty());

        let m = surface_answer_check("Tottenham Hotspur F.C.", &gold);
        assert_eq!(m.spans, vec![Span { start: 0, end: 22 }]);
    }

    #[test]
    fn surface_check_respects_word_boundaries() {
        let gold = vec![GoldAnswer::new("Heat", "Q1")];
        assert!(!surface_answer_check("Heather left", &gold).found);
        assert!(surface_answer_check("the HEAT won", &gold).found);
        let gold = vec![GoldAnswer::new("Real Madrid CF", "Q8682")];
        assert!(surface_answer_check("signed for real\nmadrid.", &gold).found);
    }

    #[test]
    fn semantic_check_maps_replies() {
        let templates = TemplateSet::default();
        let gold = vec![GoldAnswer::new("X", "Q1")];
        for (reply, want) in [
            ("YES", SemanticVerdict::Supported),
            ("NO", SemanticVerdict::Unsupported),
        ] {
            let mock = MockBackend::new("judge");
            mock.push(TaskId::SemanticCheck, reply);
            assert_eq!(semantic_answer_check("doc", "q?", &gold, &mock, &templates), want);
        }
        let mock = MockBackend::new("judge");
        mock.push(TaskId::SemanticCheck, "maybe?");
        assert!(matches!(
            semantic_answer_check("doc", "q?", &gold, &mock, &templates),
            SemanticVerdict::JudgeError(_)
        ));
        let empty = MockBackend::new("judge");
        assert!(matches!(
            semantic_answer_check("doc", "q?", &gold, &empty, &templates),
            SemanticVerdict::JudgeError(_)
        ));
    }

    fn article(entity: &str, date: &str, text: &str) -> TimestampedArticle {
        TimestampedArticle {
            entity: entity.into(),
            timestamp: NaiveDate::parse_from_str(date, "%Y-%m-%d").unwrap(),
            text: text.into(),
        }
    }

    #[test]
    fn unified_document_examples() {
        let a = article("LeBron James", "2015-06-01", "Back to Cleveland.");
        let b = article("LeBron James", "2012-03-04", "Playing in Miami.");
        let bundle = build_unified_document(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(
            bundle.render(),
            "[2012-03-04]\nPlaying in Miami.\n\n[2015-06-01]\nBack to Cleveland."
        );
        assert_eq!(bundle.total_chars(), 35);
        assert_eq!(bundle.mode(), EvidenceMode::Unified);

        let single = build_unified_document(std::slice::from_ref(&a)).unwrap();
        assert_eq!(single.render(), "[2015-06-01]\nBack to Cleveland.");

        let err = build_unified_document(&[article("A", "2010-01-01", "x"), article("B", "2011-01-01", "y")]);
        match err {
            Err(IngestError::MixedEntities { first, second }) => {
                assert_eq!((first.as_str(), second.as_str()), ("A", "B"))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unified_events_round_trip_their_bundle() {
        let articles = vec![
            article("LeBron James", "2015-06-01", "Back to Cleveland."),
            article("LeBron James", "2012-03-04", "Playing in Miami."),
        ];
        let questions = vec![UnifiedQuestion {
            event_id: 3,
            entity: "LeBron James".into(),
            question: "What teams did LeBron James play for?".into(),
            answer: vec![
                GoldAnswer::new("Miami Heat", "Q169165"),
                GoldAnswer::new("Cleveland Cavaliers", "Q162990"),
            ],
        }];
        let events = build_unified_events(&articles, &questions).unwrap();
        assert!(events[0].is_unified());
        let (year, inc) = events[0].incidents.iter().next().unwrap();
        assert_eq!(year, "2015");
        let bundle = unified_bundle(&events[0], inc).unwrap();
        assert_eq!(bundle.render(), inc.dump.body_par);
        let text = crate::model::serialize_benchmark(&events).unwrap();
        assert_eq!(crate::model::parse_benchmark(&text).unwrap(), events);
    }

    #[test]
    fn articles_jsonl_reader() {
        let text = "{\"entity\":\"A\",\"timestamp\":\"2012-03-04\",\"text\":\"hi\"}\n\n{\"entity\":\"A\",\"timestamp\":\"2012-02-30\",\"text\":\"x\"}\n";
        match read_articles_jsonl(text) {
            Err(IngestError::BadRecord { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
