//! Zero-shot, in-context, retrieval-augmented and knowledge-organization
//! inference over a benchmark corpus.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::RwLock;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec::Exec;
use crate::ingest;
use crate::kb::{ingest_document, FactExtractor, FactKey, IngestDelta, KnowledgeBase};
use crate::llm::tasks::{formulate_answer, question_to_quadruple, LlmFactExtractor};
use crate::llm::{LlmBackend, LlmError, TaskId, TemplateSet};
use crate::model::{BenchmarkEvent, EvidenceBundle, EvidenceMode, Incident, TemporalFact};
use crate::retrieval::{
    self, split_recursive, EmbeddedChunk, EmbeddingBackend, FlatIndex, RetrievalConfig, RetrievalError,
};
use crate::snapshot::{SnapshotError, SnapshotTimeline};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    Zs,
    Icl,
    Rag,
    Ko,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 4] = [PipelineKind::Zs, PipelineKind::Icl, PipelineKind::Rag, PipelineKind::Ko];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineKind::Zs => "zs",
            PipelineKind::Icl => "icl",
            PipelineKind::Rag => "rag",
            PipelineKind::Ko => "ko",
        }
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PipelineKind::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown pipeline `{s}` (expected zs, icl, rag or ko)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KbScope {
    /// One store shared by every question of the run.
    #[default]
    PerRun,
    /// A fresh store per question.
    PerQuestion,
}

impl FromStr for KbScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_run" => Ok(KbScope::PerRun),
            "per_question" => Ok(KbScope::PerQuestion),
            _ => Err(format!("unknown kb scope `{s}` (expected per_run or per_question)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pipeline: PipelineKind,
    pub snapshot_mode: EvidenceMode,
    pub retrieval: RetrievalConfig,
    pub use_parametric_memory: bool,
    pub kb_scope: KbScope,
    pub seed: u64,
    /// Largest prompt, in characters, the answering model accepts.
    pub context_budget_chars: Option<usize>,
    /// Texts longer than this are extracted window by window.
    pub extraction_window_chars: usize,
    /// Query every relation of the subject when the exact key has no hits.
    pub ko_subject_fallback: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineKind::Ko,
            snapshot_mode: EvidenceMode::Closest,
            retrieval: RetrievalConfig::default(),
            use_parametric_memory: true,
            kb_scope: KbScope::PerRun,
            seed: 0,
            context_budget_chars: None,
            extraction_window_chars: 12_000,
            ko_subject_fallback: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("cannot write records: {0}")]
    Io(#[from] std::io::Error),
}

impl RunConfig {
    /// Checks that hold before any request is sent.
    pub fn validate(&self, unified_corpus: bool) -> Result<(), PipelineError> {
        if self.pipeline == PipelineKind::Rag {
            self.retrieval
                .validate()
                .map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if self.extraction_window_chars == 0 {
            return Err(PipelineError::Config("extraction_window_chars must be positive".into()));
        }
        if self.pipeline != PipelineKind::Zs {
            match (self.snapshot_mode == EvidenceMode::Unified, unified_corpus) {
                (true, false) => {
                    return Err(PipelineError::Config(
                        "snapshot mode `unified` requires a unified article corpus".into(),
                    ))
                }
                (false, true) => {
                    return Err(PipelineError::Config(format!(
                        "unified article corpus requires snapshot mode `unified`, got `{}`",
                        self.snapshot_mode
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Transport,
    ContextOverflow,
    QuadrupleParse,
    FactExtraction,
    NoFollowingSnapshot,
    Evidence,
    Retrieval,
}

/// Why a record has no prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
}

impl Failure {
    fn new(kind: FailureKind, message: impl fmt::Display) -> Self {
        Self {
            kind,
            message: message.to_string(),
        }
    }

    fn from_llm(e: &LlmError) -> Self {
        Self::new(FailureKind::Transport, e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedChunk {
    pub id: String,
    pub score: f64,
}

/// One intermediate artifact of a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum TraceStage {
    Evidence {
        mode: EvidenceMode,
        source: String,
        texts: usize,
    },
    Retrieval {
        chunks: Vec<RetrievedChunk>,
    },
    Quadruple {
        subject: String,
        relation: String,
        q_year: Option<i32>,
    },
    KbDelta {
        delta: IngestDelta,
    },
    KbHits {
        facts: Vec<String>,
    },
}

impl TraceStage {
    pub fn is_retrieval_or_kb(&self) -> bool {
        !matches!(self, TraceStage::Evidence { .. })
    }
}

/// One answered (or failed) question. Exactly one of `prediction` and
/// `failure` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub event_id: i64,
    pub q_year: i32,
    pub question: String,
    pub prediction: Option<String>,
    pub failure: Option<Failure>,
    pub pipeline: PipelineKind,
    pub snapshot_mode: EvidenceMode,
    pub model: String,
    pub evidence_chars: usize,
    pub latency_ms: u64,
    pub trace: Vec<TraceStage>,
}

/// The question part of an incident.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionRef {
    pub event_id: i64,
    pub q_year: i32,
    pub question: String,
}

const MEMORY_CLOSED: &str = "Rely solely on the reference text. Do not use knowledge that is not stated in it; if the text does not answer the question, reply exactly: unknown";
const MEMORY_OPEN: &str = "Prefer the reference text, and use your own knowledge only where the text is silent.";

/// Everything a pipeline needs besides the question and its evidence.
#[derive(Clone, Copy)]
pub struct Pipeline<'a> {
    pub cfg: &'a RunConfig,
    pub backend: &'a dyn LlmBackend,
    pub templates: &'a TemplateSet,
    pub embedder: &'a dyn EmbeddingBackend,
    /// Stage-2 extractor for KO; `None` uses the answering backend.
    pub extractor: Option<&'a dyn FactExtractor>,
    pub exec: Exec,
    /// Record wall-clock latency; off for reproducible offline runs.
    pub measure_latency: bool,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        cfg: &'a RunConfig,
        backend: &'a dyn LlmBackend,
        templates: &'a TemplateSet,
        embedder: &'a dyn EmbeddingBackend,
    ) -> Self {
        Self {
            cfg,
            backend,
            templates,
            embedder,
            extractor: None,
            exec: Exec::default(),
            measure_latency: false,
        }
    }

    fn record(&self, q: &QuestionRef, pipeline: PipelineKind, evidence_chars: usize) -> AnswerRecord {
        AnswerRecord {
            event_id: q.event_id,
            q_year: q.q_year,
            question: q.question.clone(),
            prediction: None,
            failure: None,
            pipeline,
            snapshot_mode: self.cfg.snapshot_mode,
            model: self.backend.name().to_string(),
            evidence_chars,
            latency_ms: 0,
            trace: Vec::new(),
        }
    }

    fn timed(&self, started: Instant, mut rec: AnswerRecord) -> AnswerRecord {
        if self.measure_latency {
            rec.latency_ms = started.elapsed().as_millis() as u64;
        }
        rec
    }

    fn settle(rec: &mut AnswerRecord, out: Result<String, Failure>) {
        match out {
            Ok(p) => rec.prediction = Some(p.trim().to_string()),
            Err(f) => rec.failure = Some(f),
        }
    }

    pub fn run_zero_shot(&self, q: &QuestionRef) -> AnswerRecord {
        let started = Instant::now();
        let mut rec = self.record(q, PipelineKind::Zs, 0);
        let out = self
            .templates
            .render(TaskId::AnswerClosedBook, &bindings([("question", &q.question)]))
            .and_then(|req| self.backend.chat(TaskId::AnswerClosedBook, &req))
            .map(|r| r.text)
            .map_err(|e| Failure::from_llm(&e));
        Self::settle(&mut rec, out);
        self.timed(started, rec)
    }

    fn answer_with_context(&self, question: &str, context: &str) -> Result<String, Failure> {
        let rule = if self.cfg.use_parametric_memory {
            MEMORY_OPEN
        } else {
            MEMORY_CLOSED
        };
        let req = self
            .templates
            .render(
                TaskId::AnswerWithContext,
                &bindings([("question", question), ("context", context), ("memory_rule", rule)]),
            )
            .map_err(|e| Failure::from_llm(&e))?;
        if let Some(budget) = self.cfg.context_budget_chars {
            let chars = req.prompt_chars();
            if chars > budget {
                return Err(Failure::new(
                    FailureKind::ContextOverflow,
                    format!("prompt of {chars} chars exceeds context budget of {budget}"),
                ));
            }
        }
        self.backend
            .chat(TaskId::AnswerWithContext, &req)
            .map(|r| r.text)
            .map_err(|e| Failure::from_llm(&e))
    }

    fn evidence_stage(bundle: &EvidenceBundle) -> TraceStage {
        TraceStage::Evidence {
            mode: bundle.mode(),
            source: bundle.source().to_string(),
            texts: bundle.texts().len(),
        }
    }

    /// The whole bundle, rendered with its date headers, ahead of the question.
    pub fn run_icl(&self, q: &QuestionRef, bundle: &EvidenceBundle) -> AnswerRecord {
        let started = Instant::now();
        let mut rec = self.record(q, PipelineKind::Icl, bundle.total_chars());
        rec.trace.push(Self::evidence_stage(bundle));
        let out = self.answer_with_context(&q.question, &bundle.render());
        Self::settle(&mut rec, out);
        self.timed(started, rec)
    }

    /// Top-k chunks of the bundle by cosine similarity to the question,
    /// best first, ahead of the question.
    pub fn run_rag(&self, q: &QuestionRef, bundle: &EvidenceBundle) -> AnswerRecord {
        let started = Instant::now();
        let mut rec = self.record(q, PipelineKind::Rag, bundle.total_chars());
        rec.trace.push(Self::evidence_stage(bundle));
        let out = match self.retrieve(&q.question, bundle) {
            Ok(hits) => {
                let context = hits
                    .iter()
                    .map(|(c, _)| format!("[{}]\n{}", c.id(), c.text))
                    .collect::<Vec<_>>()
                    .join("\n\n");
                rec.trace.push(TraceStage::Retrieval {
                    chunks: hits
                        .iter()
                        .map(|(c, s)| RetrievedChunk { id: c.id(), score: *s })
                        .collect(),
                });
                self.answer_with_context(&q.question, &context)
            }
            Err(e) => Err(Failure::new(FailureKind::Retrieval, e)),
        };
        Self::settle(&mut rec, out);
        self.timed(started, rec)
    }

    fn retrieve(
        &self,
        question: &str,
        bundle: &EvidenceBundle,
    ) -> Result<Vec<(retrieval::Chunk, f64)>, RetrievalError> {
        let rc = &self.cfg.retrieval;
        let chunks: Vec<retrieval::Chunk> = bundle
            .texts()
            .iter()
            .enumerate()
            .flat_map(|(i, t)| split_recursive(&bundle.doc_id(i), &t.text, rc))
            .collect();
        let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
        let vectors = retrieval::embed(&texts, self.embedder, rc.dim)?;
        let mut entries = Vec::with_capacity(chunks.len());
        for (chunk, vector) in chunks.into_iter().zip(vectors) {
            // Chunks without any hashed feature cannot be ranked.
            if vector.iter().all(|x| *x == 0.0) {
                continue;
            }
            entries.push(EmbeddedChunk::new(chunk, vector)?);
        }
        let mut index = FlatIndex::new(rc.dim).with_exec(self.exec);
        index.add(entries)?;
        let query = retrieval::embed(&[question.to_string()], self.embedder, rc.dim)?
            .pop()
            .expect("one vector per input");
        Ok(index
            .query_top_k(&query, rc.top_k)?
            .into_iter()
            .map(|s| (s.chunk.chunk.clone(), s.score))
            .collect())
    }

    /// Question to quadruple, document facts into `kb`, then an answer from
    /// the facts the key and year select.
    pub fn run_ko(
        &self,
        q: &QuestionRef,
        bundle: &EvidenceBundle,
        kb: &RwLock<KnowledgeBase>,
        q_year_hint: Option<i32>,
    ) -> AnswerRecord {
        let started = Instant::now();
        let mut rec = self.record(q, PipelineKind::Ko, bundle.total_chars());
        rec.trace.push(Self::evidence_stage(bundle));
        let out = self.ko_stages(q, bundle, kb, q_year_hint, &mut rec.trace);
        Self::settle(&mut rec, out);
        self.timed(started, rec)
    }

    fn ko_stages(
        &self,
        q: &QuestionRef,
        bundle: &EvidenceBundle,
        kb: &RwLock<KnowledgeBase>,
        q_year_hint: Option<i32>,
        trace: &mut Vec<TraceStage>,
    ) -> Result<String, Failure> {
        let quad =
            question_to_quadruple(&q.question, q_year_hint, self.backend, self.templates).map_err(|e| match e {
                LlmError::Extraction { .. } => Failure::new(FailureKind::QuadrupleParse, e),
                other => Failure::from_llm(&other),
            })?;
        trace.push(TraceStage::Quadruple {
            subject: quad.subject.clone(),
            relation: quad.relation.clone(),
            q_year: quad.q_year,
        });

        let llm_extractor = LlmFactExtractor::new(self.backend, self.templates, self.cfg.extraction_window_chars);
        let extractor: &dyn FactExtractor = self.extractor.unwrap_or(&llm_extractor);
        let ingested = {
            let mut guard = kb.write().unwrap_or_else(|e| e.into_inner());
            ingest_document(&mut guard, bundle, &quad.subject, extractor)
        };
        match ingested {
            Ok(delta) => trace.push(TraceStage::KbDelta { delta }),
            Err(e) => {
                trace.push(TraceStage::KbDelta { delta: e.partial });
                return Err(Failure::new(FailureKind::FactExtraction, e));
            }
        }

        let key = FactKey::new(&quad.subject, &quad.relation).expect("quadruple keys are non-empty");
        let hits: Vec<TemporalFact> = {
            let guard = kb.read().unwrap_or_else(|e| e.into_inner());
            let exact = guard.query(&key, quad.q_year);
            if exact.is_empty() && self.cfg.ko_subject_fallback {
                guard.query_subject(&quad.subject, quad.q_year)
            } else {
                exact
            }
        };
        trace.push(TraceStage::KbHits {
            facts: hits.iter().map(TemporalFact::to_line).collect(),
        });
        formulate_answer(&q.question, &hits, self.backend, self.templates).map_err(|e| Failure::from_llm(&e))
    }

    /// One record per incident in `(event_id, year)` order. Per-question
    /// failures become failure records; only configuration errors abort.
    pub fn run_benchmark(&self, events: &[BenchmarkEvent]) -> Result<RunOutput, PipelineError> {
        let unified = events.first().is_some_and(BenchmarkEvent::is_unified);
        if events.iter().any(|e| e.is_unified() != unified) {
            return Err(PipelineError::Config("corpus mixes unified and snapshot events".into()));
        }
        self.cfg.validate(unified)?;

        let mut ordered: Vec<&BenchmarkEvent> = events.iter().collect();
        ordered.sort_by_key(|e| e.event_id);
        let needs_timeline = self.cfg.pipeline != PipelineKind::Zs && !unified;
        let timelines: Vec<Option<Result<SnapshotTimeline, SnapshotError>>> = ordered
            .iter()
            .map(|e| needs_timeline.then(|| SnapshotTimeline::from_event(e)))
            .collect();
        let items: Vec<(usize, &Incident)> = ordered
            .iter()
            .enumerate()
            .flat_map(|(i, e)| e.incidents.values().map(move |inc| (i, inc)))
            .collect();

        let shared_kb = RwLock::new(KnowledgeBase::new());
        let run_one = |&(ei, inc): &(usize, &Incident)| -> AnswerRecord {
            let event = ordered[ei];
            let q = QuestionRef {
                event_id: event.event_id,
                q_year: inc.q_year,
                question: inc.question.clone(),
            };
            if self.cfg.pipeline == PipelineKind::Zs {
                return self.run_zero_shot(&q);
            }
            let bundle = match self.evidence(event, inc, timelines[ei].as_ref()) {
                Ok(b) => b,
                Err(f) => {
                    let mut rec = self.record(&q, self.cfg.pipeline, 0);
                    rec.failure = Some(f);
                    return rec;
                }
            };
            match self.cfg.pipeline {
                PipelineKind::Zs => unreachable!("handled above"),
                PipelineKind::Icl => self.run_icl(&q, &bundle),
                PipelineKind::Rag => self.run_rag(&q, &bundle),
                PipelineKind::Ko => {
                    let hint = (!unified).then_some(inc.q_year);
                    match self.cfg.kb_scope {
                        KbScope::PerRun => self.run_ko(&q, &bundle, &shared_kb, hint),
                        KbScope::PerQuestion => self.run_ko(&q, &bundle, &RwLock::new(KnowledgeBase::new()), hint),
                    }
                }
            }
        };

        let sequential = self.backend.order_sensitive()
            || (self.cfg.pipeline == PipelineKind::Ko && self.cfg.kb_scope == KbScope::PerRun);
        let exec = if sequential { Exec::Sequential } else { self.exec };
        let records = exec.map(&items, run_one);
        let kb = (self.cfg.pipeline == PipelineKind::Ko && self.cfg.kb_scope == KbScope::PerRun)
            .then(|| shared_kb.into_inner().unwrap_or_else(|e| e.into_inner()));
        Ok(RunOutput { records, kb })
    }

    fn evidence(
        &self,
        event: &BenchmarkEvent,
        incident: &Incident,
        timeline: Option<&Result<SnapshotTimeline, SnapshotError>>,
    ) -> Result<EvidenceBundle, Failure> {
        if event.is_unified() {
            return ingest::unified_bundle(event, incident).map_err(|e| Failure::new(FailureKind::Evidence, e));
        }
        match timeline {
            Some(Ok(t)) => t
                .evidence(self.cfg.snapshot_mode, incident.q_year)
                .map_err(|e| match e {
                    SnapshotError::NoFollowingSnapshot { .. } => Failure::new(FailureKind::NoFollowingSnapshot, e),
                    other => Failure::new(FailureKind::Evidence, other),
                }),
            Some(Err(e)) => Err(Failure::new(FailureKind::Evidence, e)),
            None => Err(Failure::new(FailureKind::Evidence, "no timeline built")),
        }
    }
}

fn bindings<const N: usize>(pairs: [(&str, &str); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<AnswerRecord>,
    /// Final shared store of a KO run with per-run scope.
    pub kb: Option<KnowledgeBase>,
}

/// Cumulative bundles share one index; each snapshot keeps its own doc id.
pub const CUMULATIVE_INDEX: &str = "shared index, one doc_id per snapshot";

/// Provenance of a run. Credentials never appear here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub template_versions: BTreeMap<String, u32>,
    pub pattern_version: u32,
    pub seed: u64,
    pub backend: String,
    pub created_at: String,
    pub records: usize,
    pub failures: BTreeMap<String, usize>,
    /// How cumulative bundles are indexed for retrieval.
    pub cumulative_index: String,
    /// Where each resolved setting came from (flag, env, file, default).
    pub resolved: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(
        cfg: &RunConfig,
        templates: &TemplateSet,
        pattern_version: u32,
        backend: &str,
        records: &[AnswerRecord],
        resolved: BTreeMap<String, String>,
    ) -> Self {
        let mut failures = BTreeMap::new();
        for f in records.iter().filter_map(|r| r.failure.as_ref()) {
            let kind = serde_json::to_value(f.kind).expect("kind serializes");
            *failures
                .entry(kind.as_str().unwrap_or_default().to_string())
                .or_insert(0) += 1;
        }
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.config_hash(),
            config: cfg.clone(),
            template_versions: templates.versions(),
            pattern_version,
            seed: cfg.seed,
            backend: backend.to_string(),
            created_at: timestamp_now(),
            records: records.len(),
            failures,
            cumulative_index: CUMULATIVE_INDEX.to_string(),
            resolved,
        }
    }
}

/// RFC 3339 UTC time, taken from `SOURCE_DATE_EPOCH` when it is set.
pub fn timestamp_now() -> String {
    let fixed = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0));
    fixed
        .unwrap_or_else(chrono::Utc::now)
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn write_records<W: Write>(mut out: W, records: &[AnswerRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_records(text: &str) -> Result<Vec<AnswerRecord>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}
