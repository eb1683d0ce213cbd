//! Shared domain types and the benchmark JSON format.
//!
//! A benchmark file holds one or more events. Each event maps four-digit
//! year keys to incidents; an incident carries the question asked in that
//! year, the gold answers and the page dump used as evidence:
//!
//! ```json
//! {
//!   "event_id": 6,
//!   "incidents": {
//!     "2010": {
//!       "q_year": 2010, "map_year": 2011,
//!       "question": "Which team did Luka Modrić play for in 2010?",
//!       "answer": [{"name": "Tottenham Hotspur F.C.", "wikidata_id": "Q18741"}],
//!       "dump": {"url": "...", "body_par": "...", "infobox": {"2008–": "Tottenham Hotspur"}},
//!       "ans_comp": null, "llm_resp": null
//!     }
//!   }
//! }
//! ```
//!
//! The reader accepts a single event object, an array of events, or a
//! stream of either (JSON lines). Keys it does not know are kept in an
//! `extra` map on the nearest struct and written back out unchanged.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Canonical join key: NFC, lowercase, single inner spaces, trimmed.
pub fn normalize_key(s: &str) -> String {
    let nfc: String = s.nfc().collect();
    let lower = nfc.to_lowercase();
    // Lowercasing can produce decomposed sequences (e.g. 'İ'); recompose.
    let lower: String = lower.nfc().collect();
    lower.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Where a fact was read from: a document id and a character span in it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FactError {
    #[error("fact subject is empty after normalization")]
    EmptySubject,
    #[error("fact relation is empty after normalization")]
    EmptyRelation,
    #[error("fact object is empty")]
    EmptyObject,
    #[error("start year {start} is after end year {end}")]
    InvertedSpan { start: i32, end: i32 },
    #[error("provenance span {start}..{end} is outside document `{doc_id}` of {doc_len} chars")]
    ProvenanceOutOfBounds {
        doc_id: String,
        start: usize,
        end: usize,
        doc_len: usize,
    },
}

/// One (subject, relation, object, span) assertion.
///
/// Subject and relation are stored in [`normalize_key`] form. A single
/// year `y` is the span `(Some(y), Some(y))`; an absent bound is open.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "FactFields")]
pub struct TemporalFact {
    subject: String,
    relation: String,
    object: String,
    start_year: Option<i32>,
    end_year: Option<i32>,
    #[serde(default)]
    provenance: Vec<Provenance>,
}

#[derive(Deserialize)]
struct FactFields {
    subject: String,
    relation: String,
    object: String,
    start_year: Option<i32>,
    end_year: Option<i32>,
    #[serde(default)]
    provenance: Vec<Provenance>,
}

impl TryFrom<FactFields> for TemporalFact {
    type Error = FactError;

    fn try_from(f: FactFields) -> Result<Self, Self::Error> {
        let mut fact = TemporalFact::new(&f.subject, &f.relation, &f.object, f.start_year, f.end_year)?;
        fact.provenance = f.provenance;
        Ok(fact)
    }
}

impl TemporalFact {
    pub fn new(
        subject: &str,
        relation: &str,
        object: &str,
        start_year: Option<i32>,
        end_year: Option<i32>,
    ) -> Result<Self, FactError> {
        let subject = normalize_key(subject);
        let relation = normalize_key(relation);
        let object = object.split_whitespace().collect::<Vec<_>>().join(" ");
        if subject.is_empty() {
            return Err(FactError::EmptySubject);
        }
        if relation.is_empty() {
            return Err(FactError::EmptyRelation);
        }
        if object.is_empty() {
            return Err(FactError::EmptyObject);
        }
        if let (Some(start), Some(end)) = (start_year, end_year) {
            if start > end {
                return Err(FactError::InvertedSpan { start, end });
            }
        }
        Ok(Self {
            subject,
            relation,
            object,
            start_year,
            end_year,
            provenance: Vec::new(),
        })
    }

    /// Attach a provenance span, checked against the source document length
    /// in characters.
    pub fn with_provenance(
        mut self,
        doc_id: impl Into<String>,
        start: usize,
        end: usize,
        doc_len: usize,
    ) -> Result<Self, FactError> {
        let doc_id = doc_id.into();
        if start > end || end > doc_len {
            return Err(FactError::ProvenanceOutOfBounds {
                doc_id,
                start,
                end,
                doc_len,
            });
        }
        self.provenance.push(Provenance { doc_id, start, end });
        Ok(self)
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }
    pub fn relation(&self) -> &str {
        &self.relation
    }
    pub fn object(&self) -> &str {
        &self.object
    }
    pub fn start_year(&self) -> Option<i32> {
        self.start_year
    }
    pub fn end_year(&self) -> Option<i32> {
        self.end_year
    }
    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub(crate) fn provenance_mut(&mut self) -> &mut Vec<Provenance> {
        &mut self.provenance
    }

    pub(crate) fn set_span(&mut self, start: Option<i32>, end: Option<i32>) {
        self.start_year = start;
        self.end_year = end;
    }

    /// Whether the span covers `year`; open bounds extend to infinity.
    pub fn contains_year(&self, year: i32) -> bool {
        self.start_year.is_none_or(|s| s <= year) && self.end_year.is_none_or(|e| year <= e)
    }

    /// The same fact without provenance, used for content comparisons.
    pub fn content_eq(&self, other: &TemporalFact) -> bool {
        self.subject == other.subject
            && self.relation == other.relation
            && self.object == other.object
            && self.start_year == other.start_year
            && self.end_year == other.end_year
    }

    /// Pipe-delimited line form: `subject | relation | object | start | end`,
    /// with `-` for an absent year.
    pub fn to_line(&self) -> String {
        fn year(y: Option<i32>) -> String {
            y.map_or_else(|| "-".to_string(), |y| y.to_string())
        }
        format!(
            "{} | {} | {} | {} | {}",
            self.subject,
            self.relation,
            self.object,
            year(self.start_year),
            year(self.end_year)
        )
    }
}

/// A question rewritten as (subject, relation, ?, year). An absent year
/// means the question spans all time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionQuadruple {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub q_year: Option<i32>,
}

impl QuestionQuadruple {
    /// Placeholder stored in the object slot.
    pub const PLACEHOLDER: &'static str = "?";

    pub fn new(subject: &str, relation: &str, q_year: Option<i32>) -> Option<Self> {
        let subject = normalize_key(subject);
        let relation = normalize_key(relation);
        if subject.is_empty() || relation.is_empty() {
            return None;
        }
        Some(Self {
            subject,
            relation,
            object: Self::PLACEHOLDER.to_string(),
            q_year,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnswer {
    pub name: String,
    pub wikidata_id: String,
    #[serde(flatten, default, skip_serializing_if = "Map::is_empty")]
    pub extra: Map<String, Value>,
}

impl GoldAnswer {
    pub fn new(name: impl Into<String>, wikidata_id: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            wikidata_id: wikidata_id.into(),
            extra: Map::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Dump {
    pub url: String,
    pub body_par: String,
    pub infobox: BTreeMap<String, String>,
    #[serde(flatten, default, skip_serializing_if = "Map::is_empty")]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incident {
    pub q_year: i32,
    pub map_year: i32,
    pub question: String,
    pub answer: Vec<GoldAnswer>,
    pub dump: Dump,
    pub ans_comp: Option<Value>,
    pub llm_resp: Option<Value>,
    #[serde(flatten, default, skip_serializing_if = "Map::is_empty")]
    pub extra: Map<String, Value>,
}

/// One entity's timeline of yearly questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkEvent {
    pub event_id: i64,
    pub incidents: BTreeMap<String, Incident>,
    #[serde(flatten, default, skip_serializing_if = "Map::is_empty")]
    pub extra: Map<String, Value>,
}

/// Event-level extra key marking a concatenated-articles corpus.
pub const CORPUS_KEY: &str = "corpus";
/// Value of [`CORPUS_KEY`] for unified article corpora.
pub const UNIFIED_CORPUS: &str = "unified_clark";
/// Incident-level extra key holding the dated source articles of a unified document.
pub const ARTICLES_KEY: &str = "articles";

impl BenchmarkEvent {
    /// True when the event was built from concatenated timestamped articles.
    pub fn is_unified(&self) -> bool {
        self.extra.get(CORPUS_KEY).and_then(Value::as_str) == Some(UNIFIED_CORPUS)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BenchmarkError {
    #[error("invalid UTF-8 at byte {offset}")]
    InvalidUtf8 { offset: usize },
    #[error("malformed JSON at byte {offset} (line {line}, column {column}): {message}")]
    Json {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error{}: {path}: {reason}", event_id.map(|id| format!(" in event {id}")).unwrap_or_default())]
    Schema {
        event_id: Option<i64>,
        path: String,
        reason: String,
    },
}

impl BenchmarkError {
    fn schema(event_id: Option<i64>, path: impl Into<String>, reason: impl Into<String>) -> Self {
        BenchmarkError::Schema {
            event_id,
            path: path.into(),
            reason: reason.into(),
        }
    }
}

fn is_year_key(key: &str) -> bool {
    key.len() == 4 && key.bytes().all(|b| b.is_ascii_digit())
}

/// Parse raw bytes, rejecting invalid UTF-8 instead of replacing it.
pub fn parse_benchmark_bytes(bytes: &[u8]) -> Result<Vec<BenchmarkEvent>, BenchmarkError> {
    let text = std::str::from_utf8(bytes).map_err(|e| BenchmarkError::InvalidUtf8 {
        offset: e.valid_up_to(),
    })?;
    parse_benchmark(text)
}

pub fn parse_benchmark(json_text: &str) -> Result<Vec<BenchmarkEvent>, BenchmarkError> {
    let mut events = Vec::new();
    let stream = serde_json::Deserializer::from_str(json_text).into_iter::<Value>();
    for value in stream {
        let value = value.map_err(|e| json_error(json_text, &e))?;
        match value {
            Value::Object(obj) => events.push(event_from_object(obj)?),
            Value::Array(items) => {
                for (i, item) in items.into_iter().enumerate() {
                    match item {
                        Value::Object(obj) => events.push(event_from_object(obj)?),
                        other => {
                            return Err(BenchmarkError::schema(
                                None,
                                format!("[{i}]"),
                                format!("expected event object, found {}", kind(&other)),
                            ))
                        }
                    }
                }
            }
            other => {
                return Err(BenchmarkError::schema(
                    None,
                    "$",
                    format!("expected event object or array, found {}", kind(&other)),
                ))
            }
        }
    }
    let mut seen = BTreeSet::new();
    for event in &events {
        if !seen.insert(event.event_id) {
            return Err(BenchmarkError::schema(
                Some(event.event_id),
                "event_id",
                "duplicate event_id in file",
            ));
        }
    }
    Ok(events)
}

fn json_error(text: &str, e: &serde_json::Error) -> BenchmarkError {
    let (line, column) = (e.line(), e.column());
    let mut offset = 0usize;
    if line > 0 {
        for (i, l) in text.split_inclusive('\n').enumerate() {
            if i + 1 == line {
                break;
            }
            offset += l.len();
        }
        offset += column.saturating_sub(1);
    }
    BenchmarkError::Json {
        offset: offset.min(text.len()),
        line,
        column,
        message: e.to_string(),
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

struct Fields {
    obj: Map<String, Value>,
    event_id: Option<i64>,
    path: String,
}

impl Fields {
    fn take(&mut self, key: &str) -> Result<Value, BenchmarkError> {
        self.obj.remove(key).ok_or_else(|| {
            BenchmarkError::schema(self.event_id, format!("{}{key}", self.path), "missing required field")
        })
    }

    fn err(&self, key: &str, reason: impl Into<String>) -> BenchmarkError {
        BenchmarkError::schema(self.event_id, format!("{}{key}", self.path), reason)
    }

    fn int(&mut self, key: &str) -> Result<i64, BenchmarkError> {
        let v = self.take(key)?;
        v.as_i64()
            .ok_or_else(|| self.err(key, format!("expected integer, found {}", kind(&v))))
    }

    fn year(&mut self, key: &str) -> Result<i32, BenchmarkError> {
        let v = self.int(key)?;
        i32::try_from(v).map_err(|_| self.err(key, "year out of range"))
    }

    fn string(&mut self, key: &str) -> Result<String, BenchmarkError> {
        match self.take(key)? {
            Value::String(s) => Ok(s),
            other => Err(self.err(key, format!("expected string, found {}", kind(&other)))),
        }
    }

    fn object(&mut self, key: &str) -> Result<Map<String, Value>, BenchmarkError> {
        match self.take(key)? {
            Value::Object(o) => Ok(o),
            other => Err(self.err(key, format!("expected object, found {}", kind(&other)))),
        }
    }

    /// Absent or null both read as `None`.
    fn optional(&mut self, key: &str) -> Option<Value> {
        match self.obj.remove(key) {
            None | Some(Value::Null) => None,
            Some(v) => Some(v),
        }
    }
}

fn event_from_object(obj: Map<String, Value>) -> Result<BenchmarkEvent, BenchmarkError> {
    let event_id = obj.get("event_id").and_then(Value::as_i64);
    let mut f = Fields {
        obj,
        event_id,
        path: String::new(),
    };
    let event_id = f.int("event_id")?;
    let incidents_obj = f.object("incidents")?;
    let mut incidents = BTreeMap::new();
    for (key, value) in incidents_obj {
        if !is_year_key(&key) {
            return Err(BenchmarkError::schema(
                Some(event_id),
                format!("incidents.{key}"),
                format!("incident key `{key}` is not a four-digit year"),
            ));
        }
        let path = format!("incidents.{key}.");
        let Value::Object(inc) = value else {
            return Err(BenchmarkError::schema(
                Some(event_id),
                format!("incidents.{key}"),
                format!("expected object, found {}", kind(&value)),
            ));
        };
        let incident = incident_from_object(inc, event_id, path)?;
        incidents.insert(key, incident);
    }
    Ok(BenchmarkEvent {
        event_id,
        incidents,
        extra: f.obj,
    })
}

fn incident_from_object(obj: Map<String, Value>, event_id: i64, path: String) -> Result<Incident, BenchmarkError> {
    let mut f = Fields {
        obj,
        event_id: Some(event_id),
        path,
    };
    let q_year = f.year("q_year")?;
    let map_year = f.year("map_year")?;
    let question = f.string("question")?;
    if question.trim().is_empty() {
        return Err(f.err("question", "question is empty"));
    }
    let answer = match f.take("answer")? {
        Value::Array(items) => items,
        other => return Err(f.err("answer", format!("expected array, found {}", kind(&other)))),
    };
    if answer.is_empty() {
        return Err(f.err("answer", "answer list is empty"));
    }
    let mut answers = Vec::with_capacity(answer.len());
    for (i, item) in answer.into_iter().enumerate() {
        let Value::Object(a) = item else {
            return Err(f.err(&format!("answer[{i}]"), "expected answer object"));
        };
        let mut af = Fields {
            obj: a,
            event_id: Some(event_id),
            path: format!("{}answer[{i}].", f.path),
        };
        let name = af.string("name")?;
        if name.trim().is_empty() {
            return Err(af.err("name", "answer name is empty"));
        }
        let wikidata_id = af.string("wikidata_id")?;
        answers.push(GoldAnswer {
            name,
            wikidata_id,
            extra: af.obj,
        });
    }
    let dump_obj = f.object("dump")?;
    let mut df = Fields {
        obj: dump_obj,
        event_id: Some(event_id),
        path: format!("{}dump.", f.path),
    };
    let url = df.string("url")?;
    let body_par = df.string("body_par")?;
    let mut infobox = BTreeMap::new();
    for (k, v) in df.object("infobox")? {
        match v {
            Value::String(s) => {
                infobox.insert(k, s);
            }
            other => {
                return Err(df.err(
                    &format!("infobox.{k}"),
                    format!("expected string, found {}", kind(&other)),
                ))
            }
        }
    }
    let dump = Dump {
        url,
        body_par,
        infobox,
        extra: df.obj,
    };
    let ans_comp = f.optional("ans_comp");
    let llm_resp = f.optional("llm_resp");
    Ok(Incident {
        q_year,
        map_year,
        question,
        answer: answers,
        dump,
        ans_comp,
        llm_resp,
        extra: f.obj,
    })
}

/// Check the invariants the writer refuses to break.
pub fn validate_events(events: &[BenchmarkEvent]) -> Result<(), BenchmarkError> {
    let mut seen = BTreeSet::new();
    for event in events {
        let id = Some(event.event_id);
        if !seen.insert(event.event_id) {
            return Err(BenchmarkError::schema(id, "event_id", "duplicate event_id"));
        }
        for (key, inc) in &event.incidents {
            let path = format!("incidents.{key}");
            if !is_year_key(key) {
                return Err(BenchmarkError::schema(
                    id,
                    path,
                    format!("incident key `{key}` is not a four-digit year"),
                ));
            }
            if inc.question.trim().is_empty() {
                return Err(BenchmarkError::schema(
                    id,
                    format!("{path}.question"),
                    "question is empty",
                ));
            }
            if inc.answer.is_empty() {
                return Err(BenchmarkError::schema(
                    id,
                    format!("{path}.answer"),
                    "answer list is empty",
                ));
            }
            if let Some(i) = inc.answer.iter().position(|a| a.name.trim().is_empty()) {
                return Err(BenchmarkError::schema(
                    id,
                    format!("{path}.answer[{i}].name"),
                    "answer name is empty",
                ));
            }
        }
    }
    Ok(())
}

/// Write events as a pretty-printed JSON array. Absent `ans_comp` and
/// `llm_resp` are written as `null`.
pub fn serialize_benchmark(events: &[BenchmarkEvent]) -> Result<String, BenchmarkError> {
    validate_events(events)?;
    let values: Vec<Value> = events.iter().map(event_to_value).collect();
    Ok(serde_json::to_string_pretty(&values).expect("JSON values always serialize"))
}

fn event_to_value(event: &BenchmarkEvent) -> Value {
    let mut obj = event.extra.clone();
    obj.insert("event_id".into(), Value::from(event.event_id));
    let incidents: Map<String, Value> = event
        .incidents
        .iter()
        .map(|(k, inc)| (k.clone(), incident_to_value(inc)))
        .collect();
    obj.insert("incidents".into(), Value::Object(incidents));
    Value::Object(obj)
}

fn incident_to_value(inc: &Incident) -> Value {
    let mut obj = inc.extra.clone();
    obj.insert("q_year".into(), Value::from(inc.q_year));
    obj.insert("map_year".into(), Value::from(inc.map_year));
    obj.insert("question".into(), Value::from(inc.question.clone()));
    let answers = inc
        .answer
        .iter()
        .map(|a| {
            let mut o = a.extra.clone();
            o.insert("name".into(), Value::from(a.name.clone()));
            o.insert("wikidata_id".into(), Value::from(a.wikidata_id.clone()));
            Value::Object(o)
        })
        .collect();
    obj.insert("answer".into(), Value::Array(answers));
    let mut dump = inc.dump.extra.clone();
    dump.insert("url".into(), Value::from(inc.dump.url.clone()));
    dump.insert("body_par".into(), Value::from(inc.dump.body_par.clone()));
    let infobox: Map<String, Value> = inc
        .dump
        .infobox
        .iter()
        .map(|(k, v)| (k.clone(), Value::from(v.clone())))
        .collect();
    dump.insert("infobox".into(), Value::Object(infobox));
    obj.insert("dump".into(), Value::Object(dump));
    obj.insert("ans_comp".into(), inc.ans_comp.clone().unwrap_or(Value::Null));
    obj.insert("llm_resp".into(), inc.llm_resp.clone().unwrap_or(Value::Null));
    Value::Object(obj)
}

/// How evidence for a question was assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceMode {
    Closest,
    Latest,
    Cumulative,
    Unified,
}

impl EvidenceMode {
    pub const ALL: [EvidenceMode; 4] = [
        EvidenceMode::Closest,
        EvidenceMode::Latest,
        EvidenceMode::Cumulative,
        EvidenceMode::Unified,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EvidenceMode::Closest => "closest",
            EvidenceMode::Latest => "latest",
            EvidenceMode::Cumulative => "cumulative",
            EvidenceMode::Unified => "unified",
        }
    }
}

impl fmt::Display for EvidenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EvidenceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EvidenceMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown evidence mode `{s}`"))
    }
}

/// One dated text inside an [`EvidenceBundle`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceText {
    pub date: NaiveDate,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BundleError {
    #[error("evidence bundle has no texts")]
    Empty,
    #[error("cumulative evidence dates must be strictly ascending ({prev} then {next})")]
    NotAscending { prev: NaiveDate, next: NaiveDate },
}

/// The evidence handed to a pipeline: dated texts plus the mode that
/// selected them. `total_chars` counts characters of the texts only,
/// not the rendered headers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvidenceBundle {
    mode: EvidenceMode,
    source: String,
    texts: Vec<EvidenceText>,
    total_chars: usize,
}

impl EvidenceBundle {
    pub fn new(mode: EvidenceMode, source: impl Into<String>, texts: Vec<EvidenceText>) -> Result<Self, BundleError> {
        if texts.is_empty() {
            return Err(BundleError::Empty);
        }
        if mode == EvidenceMode::Cumulative {
            for pair in texts.windows(2) {
                if pair[0].date >= pair[1].date {
                    return Err(BundleError::NotAscending {
                        prev: pair[0].date,
                        next: pair[1].date,
                    });
                }
            }
        }
        let total_chars = texts.iter().map(|t| t.text.chars().count()).sum();
        Ok(Self {
            mode,
            source: source.into(),
            texts,
            total_chars,
        })
    }

    pub fn mode(&self) -> EvidenceMode {
        self.mode
    }
    pub fn source(&self) -> &str {
        &self.source
    }
    pub fn texts(&self) -> &[EvidenceText] {
        &self.texts
    }
    pub fn total_chars(&self) -> usize {
        self.total_chars
    }

    /// Header line for one text: `[YYYY-MM-DD]` for unified documents,
    /// `[YYYY]` for page snapshots.
    pub fn header(&self, text: &EvidenceText) -> String {
        match self.mode {
            EvidenceMode::Unified => format!("[{}]", text.date.format("%Y-%m-%d")),
            _ => format!("[{}]", text.date.year()),
        }
    }

    /// Stable identifier of one member text, e.g. `Luka Modrić@2011-01-01`.
    pub fn doc_id(&self, index: usize) -> String {
        format!("{}@{}", self.source, self.texts[index].date.format("%Y-%m-%d"))
    }

    /// Headers and texts joined with blank lines.
    pub fn render(&self) -> String {
        self.texts
            .iter()
            .map(|t| format!("{}\n{}", self.header(t), t.text))
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const APPENDIX_SAMPLE: &str = include_str!("../tests/fixtures/appendix_sample.json");

    #[test]
    fn normalize_key_examples() {
        assert_eq!(normalize_key("LeBron  James "), "lebron james");
        assert_eq!(normalize_key(""), "");
        assert_eq!(normalize_key("Play   FOR"), "play for");
        assert_eq!(normalize_key("\tLuka\nModric\u{0301}"), "luka modrić");
    }

    #[test]
    fn parses_appendix_sample() {
        let events = parse_benchmark(APPENDIX_SAMPLE).unwrap();
        assert_eq!(events.len(), 1);
        let ev = &events[0];
        assert_eq!(ev.event_id, 6);
        let inc = &ev.incidents["2010"];
        assert_eq!(inc.q_year, 2010);
        assert_eq!(inc.map_year, 2011);
        assert_eq!(inc.answer[0].name, "Tottenham Hotspur F.C.");
        assert_eq!(inc.answer[0].wikidata_id, "Q18741");
        assert_eq!(inc.dump.infobox["2008–"], "Tottenham Hotspur");
        assert_eq!(inc.ans_comp, None);
    }

    #[test]
    fn empty_incidents_is_one_event() {
        let events = parse_benchmark(r#"{"event_id": 1, "incidents": {}}"#).unwrap();
        assert_eq!(events.len(), 1);
        assert!(events[0].incidents.is_empty());
    }

    #[test]
    fn bad_year_key_names_the_key() {
        let err = parse_benchmark(r#"{"event_id": 2, "incidents": {"20x0": {}}}"#).unwrap_err();
        match err {
            BenchmarkError::Schema { event_id, path, .. } => {
                assert_eq!(event_id, Some(2));
                assert!(path.contains("20x0"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_names_event_and_field() {
        let text = APPENDIX_SAMPLE.replace(r#""map_year": 2011,"#, "");
        let err = parse_benchmark(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("event 6"), "{msg}");
        assert!(msg.contains("map_year"), "{msg}");
    }

    #[test]
    fn malformed_json_reports_byte_offset() {
        let text = "{\"event_id\": 1,\n \"incidents\": {]}";
        match parse_benchmark(text).unwrap_err() {
            BenchmarkError::Json { offset, line, .. } => {
                assert_eq!(line, 2);
                assert_eq!(&text[offset..offset + 1], "]");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_utf8_rejected() {
        let mut bytes = br#"{"event_id": 1, "incidents": {}, "x": ""#.to_vec();
        bytes.push(0xff);
        bytes.extend_from_slice(b"\"}");
        assert_eq!(
            parse_benchmark_bytes(&bytes).unwrap_err(),
            BenchmarkError::InvalidUtf8 { offset: 39 }
        );
    }

    #[test]
    fn duplicate_event_ids_rejected() {
        let text = r#"[{"event_id": 1, "incidents": {}}, {"event_id": 1, "incidents": {}}]"#;
        assert!(matches!(
            parse_benchmark(text),
            Err(BenchmarkError::Schema { event_id: Some(1), .. })
        ));
    }

    #[test]
    fn json_lines_stream_accepted() {
        let text = "{\"event_id\": 1, \"incidents\": {}}\n{\"event_id\": 2, \"incidents\": {}}\n";
        assert_eq!(parse_benchmark(text).unwrap().len(), 2);
    }

    #[test]
    fn round_trip_and_nulls() {
        let events = parse_benchmark(APPENDIX_SAMPLE).unwrap();
        let out = serialize_benchmark(&events).unwrap();
        assert!(out.contains("\"ans_comp\": null"));
        assert!(out.contains("\"llm_resp\": null"));
        assert_eq!(parse_benchmark(&out).unwrap(), events);
        assert_eq!(serialize_benchmark(&[]).unwrap(), "[]");
    }

    #[test]
    fn unknown_keys_survive_round_trip() {
        let text = APPENDIX_SAMPLE
            .replacen("\"event_id\": 6,", "\"event_id\": 6, \"source\": {\"v\": [1, 2]},", 1)
            .replace("\"llm_resp\": null", "\"llm_resp\": null, \"note\": \"kept\"")
            .replace(
                "\"wikidata_id\": \"Q18741\"",
                "\"wikidata_id\": \"Q18741\", \"rank\": 1",
            );
        let events = parse_benchmark(&text).unwrap();
        assert_eq!(events[0].extra["source"]["v"][1], 2);
        assert_eq!(events[0].incidents["2010"].extra["note"], "kept");
        let again = parse_benchmark(&serialize_benchmark(&events).unwrap()).unwrap();
        assert_eq!(again, events);
    }

    #[test]
    fn writer_refuses_invalid_events() {
        let mut events = parse_benchmark(APPENDIX_SAMPLE).unwrap();
        events[0].incidents.get_mut("2010").unwrap().answer.clear();
        assert!(serialize_benchmark(&events).is_err());
    }

    #[test]
    fn fact_invariants() {
        assert_eq!(
            TemporalFact::new("  ", "play for", "x", None, None),
            Err(FactError::EmptySubject)
        );
        assert_eq!(
            TemporalFact::new("a", "r", "x", Some(2012), Some(2010)),
            Err(FactError::InvertedSpan { start: 2012, end: 2010 })
        );
        let f = TemporalFact::new("Luka  Modrić", "Play For", "Tottenham Hotspur", Some(2008), None).unwrap();
        assert_eq!(f.subject(), "luka modrić");
        assert!(f.contains_year(2010));
        assert!(!f.contains_year(2007));
        assert!(f.clone().with_provenance("doc", 3, 12, 10).is_err());
        assert_eq!(f.with_provenance("doc", 0, 10, 10).unwrap().provenance().len(), 1);
    }

    #[test]
    fn fact_serde_revalidates() {
        let bad = r#"{"subject":"a","relation":"r","object":"o","start_year":5,"end_year":1}"#;
        assert!(serde_json::from_str::<TemporalFact>(bad).is_err());
        let ok = r#"{"subject":"A  B","relation":"r","object":"o","start_year":null,"end_year":1}"#;
        let f: TemporalFact = serde_json::from_str(ok).unwrap();
        assert_eq!(f.subject(), "a b");
    }

    #[test]
    fn bundle_accounting_and_render() {
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).unwrap();
        let texts = vec![
            EvidenceText {
                date: d(2011, 1, 1),
                text: "abc".into(),
            },
            EvidenceText {
                date: d(2013, 5, 2),
                text: "défg".into(),
            },
        ];
        let b = EvidenceBundle::new(EvidenceMode::Cumulative, "x", texts.clone()).unwrap();
        assert_eq!(b.total_chars(), 7);
        assert_eq!(b.render(), "[2011]\nabc\n\n[2013]\ndéfg");
        let rev: Vec<_> = texts.into_iter().rev().collect();
        assert!(EvidenceBundle::new(EvidenceMode::Cumulative, "x", rev).is_err());
        assert_eq!(
            EvidenceBundle::new(EvidenceMode::Latest, "x", vec![]),
            Err(BundleError::Empty)
        );
    }
}
