//! Scoring predictions and slicing the results.

pub mod metrics;
pub mod report;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::llm::{self, ChatMessage, ChatRole, LlmBackend, TaskId, TemplateSet};
use crate::model::{BenchmarkEvent, GoldAnswer};
use crate::pipeline::AnswerRecord;

pub use metrics::{exact_match, normalize_answer, set_f1, split_items, token_f1};

const JUDGE_REMINDER: &str = "Reply with the single word YES or NO.";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("consensus needs at least one vote")]
    NoVotes,
    #[error("records without a matching benchmark incident: {}", .0.join(", "))]
    Unmatched(Vec<String>),
    #[error("bucket edges must be strictly ascending: {0:?}")]
    BadEdges(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteOutcome {
    Yes,
    No,
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVote {
    pub judge: String,
    pub outcome: VoteOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Consensus {
    Correct,
    Incorrect,
    Disagreement,
    Unevaluated,
}

/// Fewest votes for a correct or incorrect consensus.
pub const MIN_VOTES: usize = 2;

/// Unanimity rule: any error vote or fewer than [`MIN_VOTES`] votes is
/// unevaluated; otherwise all-yes is correct, all-no incorrect, and a mix
/// is a disagreement.
pub fn consensus(votes: &[VoteOutcome]) -> Result<Consensus, EvalError> {
    if votes.is_empty() {
        return Err(EvalError::NoVotes);
    }
    if votes.len() < MIN_VOTES || votes.iter().any(|v| matches!(v, VoteOutcome::Error(_))) {
        return Ok(Consensus::Unevaluated);
    }
    let yes = votes.iter().filter(|v| **v == VoteOutcome::Yes).count();
    Ok(if yes == votes.len() {
        Consensus::Correct
    } else if yes == 0 {
        Consensus::Incorrect
    } else {
        Consensus::Disagreement
    })
}

/// Ask one judge whether `prediction` answers `question`. An unparseable
/// reply is re-asked once; transport failures are error votes.
pub fn judge(
    question: &str,
    gold_names: &[&str],
    prediction: &str,
    backend: &dyn LlmBackend,
    templates: &TemplateSet,
) -> JudgeVote {
    let vote = |outcome| JudgeVote {
        judge: backend.name().to_string(),
        outcome,
    };
    let bindings: BTreeMap<String, String> = [
        ("question", question.to_string()),
        ("gold", gold_names.join("; ")),
        ("prediction", prediction.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let mut req = match templates.render(TaskId::Judge, &bindings) {
        Ok(r) => r,
        Err(e) => return vote(VoteOutcome::Error(e.to_string())),
    };
    let mut last = String::new();
    for attempt in 0..2 {
        match backend.chat(TaskId::Judge, &req) {
            Ok(reply) => match llm::parse_yes_no(&reply.text) {
                Some(true) => return vote(VoteOutcome::Yes),
                Some(false) => return vote(VoteOutcome::No),
                None => {
                    last = reply.text;
                    if attempt == 0 {
                        req.messages.push(ChatMessage::new(ChatRole::Assistant, last.clone()));
                        req.messages.push(ChatMessage::new(ChatRole::User, JUDGE_REMINDER));
                    }
                }
            },
            Err(e) => return vote(VoteOutcome::Error(e.to_string())),
        }
    }
    vote(VoteOutcome::Error(format!("unparseable judge reply: {last:?}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub em: bool,
    pub f1: f64,
    /// Present when the gold answer is a list of two or more names.
    pub set_f1: Option<f64>,
    pub judge_votes: Vec<JudgeVote>,
    pub consensus: Consensus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub record: AnswerRecord,
    pub gold: Vec<GoldAnswer>,
    pub verdict: Verdict,
    pub zs_correct: Option<bool>,
    pub fact_change_count: usize,
    pub doc_length_chars: usize,
}

/// Which signal counts as "correct" when aggregating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyBasis {
    Consensus,
    ExactMatch,
}

impl AccuracyBasis {
    /// Consensus when any record carries judge votes, else exact match.
    pub fn infer(records: &[EvalRecord]) -> Self {
        if records.iter().any(|r| !r.verdict.judge_votes.is_empty()) {
            AccuracyBasis::Consensus
        } else {
            AccuracyBasis::ExactMatch
        }
    }

    pub fn is_correct(self, r: &EvalRecord) -> bool {
        match self {
            AccuracyBasis::Consensus => r.verdict.consensus == Consensus::Correct,
            AccuracyBasis::ExactMatch => r.verdict.em,
        }
    }
}

/// Distinct gold answer sets across an event's incidents, minus one.
pub fn fact_change_count(event: &BenchmarkEvent) -> usize {
    let sets: BTreeSet<BTreeSet<String>> = event
        .incidents
        .values()
        .map(|i| i.answer.iter().map(|a| normalize_answer(&a.name)).collect())
        .collect();
    sets.len().saturating_sub(1)
}

/// Score every record against its incident's gold answers. Judges are only
/// consulted for records with a prediction.
pub fn evaluate(
    records: &[AnswerRecord],
    events: &[BenchmarkEvent],
    judges: &[&dyn LlmBackend],
    templates: &TemplateSet,
    exec: Exec,
) -> Result<Vec<EvalRecord>, EvalError> {
    let mut gold: HashMap<(i64, i32), (&[GoldAnswer], usize)> = HashMap::new();
    for e in events {
        let changes = fact_change_count(e);
        for inc in e.incidents.values() {
            gold.insert((e.event_id, inc.q_year), (&inc.answer, changes));
        }
    }
    let unmatched: Vec<String> = records
        .iter()
        .filter(|r| !gold.contains_key(&(r.event_id, r.q_year)))
        .map(|r| format!("{}/{}", r.event_id, r.q_year))
        .collect();
    if !unmatched.is_empty() {
        return Err(EvalError::Unmatched(unmatched));
    }
    let exec = if judges.iter().any(|j| j.order_sensitive()) {
        Exec::Sequential
    } else {
        exec
    };
    Ok(exec.map(records, |r| {
        let (answers, changes) = gold[&(r.event_id, r.q_year)];
        let names: Vec<&str> = answers.iter().map(|a| a.name.as_str()).collect();
        let pred = r.prediction.as_deref().unwrap_or("");
        let votes: Vec<JudgeVote> = if r.prediction.is_some() {
            judges
                .iter()
                .map(|j| judge(&r.question, &names, pred, *j, templates))
                .collect()
        } else {
            Vec::new()
        };
        let outcomes: Vec<VoteOutcome> = votes.iter().map(|v| v.outcome.clone()).collect();
        let distinct: BTreeSet<String> = names.iter().map(|n| normalize_answer(n)).collect();
        EvalRecord {
            record: r.clone(),
            gold: answers.to_vec(),
            verdict: Verdict {
                em: exact_match(pred, &names),
                f1: token_f1(pred, &names),
                set_f1: (distinct.len() >= 2).then(|| set_f1(&split_items(pred), &names)),
                consensus: consensus(&outcomes).unwrap_or(Consensus::Unevaluated),
                judge_votes: votes,
            },
            zs_correct: None,
            fact_change_count: changes,
            doc_length_chars: r.evidence_chars,
        }
    }))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ZeroShotSplit {
    pub correct: Vec<EvalRecord>,
    pub incorrect: Vec<EvalRecord>,
    /// `(event_id, q_year)` of records with no zero-shot counterpart.
    pub missing: Vec<(i64, i32)>,
}

/// Partition `records` by whether the zero-shot run answered the same
/// incident correctly, setting `zs_correct` on each.
pub fn split_by_zero_shot(records: &[EvalRecord], zs: &[EvalRecord], basis: AccuracyBasis) -> ZeroShotSplit {
    let zs_map: HashMap<(i64, i32), bool> = zs
        .iter()
        .map(|r| ((r.record.event_id, r.record.q_year), basis.is_correct(r)))
        .collect();
    let mut out = ZeroShotSplit::default();
    for r in records {
        let key = (r.record.event_id, r.record.q_year);
        match zs_map.get(&key) {
            Some(&ok) => {
                let mut r = r.clone();
                r.zs_correct = Some(ok);
                if ok {
                    out.correct.push(r);
                } else {
                    out.incorrect.push(r);
                }
            }
            None => out.missing.push(key),
        }
    }
    if !out.missing.is_empty() {
        tracing::warn!(missing = out.missing.len(), "records without a zero-shot counterpart");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub label: String,
    pub n: usize,
    pub correct: usize,
    /// Absent for empty buckets.
    pub accuracy: Option<f64>,
    /// Fewer than the requested minimum sample count.
    pub low_sample: bool,
}

impl Bucket {
    fn new(label: String, n: usize, correct: usize, min_n: usize) -> Self {
        Self {
            label,
            n,
            correct,
            accuracy: (n > 0).then(|| correct as f64 / n as f64),
            low_sample: n < min_n,
        }
    }
}

pub fn bucket_by_fact_changes(records: &[EvalRecord], basis: AccuracyBasis, min_n: usize) -> Vec<Bucket> {
    let mut tally: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for r in records {
        let t = tally.entry(r.fact_change_count).or_default();
        t.0 += 1;
        t.1 += usize::from(basis.is_correct(r));
    }
    tally
        .into_iter()
        .map(|(k, (n, c))| Bucket::new(k.to_string(), n, c, min_n))
        .collect()
}

/// Half-open `[e_i, e_{i+1})` buckets on `doc_length_chars`, plus
/// `[last, inf)` and, when some length falls below the first edge,
/// `[0, e_0)`.
pub fn bucket_by_doc_length(
    records: &[EvalRecord],
    edges: &[usize],
    basis: AccuracyBasis,
    min_n: usize,
) -> Result<Vec<Bucket>, EvalError> {
    if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::BadEdges(edges.to_vec()));
    }
    // Slot 0 is the underflow bucket.
    let mut tally = vec![(0usize, 0usize); edges.len() + 1];
    for r in records {
        let slot = edges.partition_point(|&e| e <= r.doc_length_chars);
        tally[slot].0 += 1;
        tally[slot].1 += usize::from(basis.is_correct(r));
    }
    let mut out = Vec::with_capacity(tally.len());
    if tally[0].0 > 0 {
        out.push(Bucket::new(format!("[0,{})", edges[0]), tally[0].0, tally[0].1, min_n));
    }
    for (i, &(n, c)) in tally.iter().enumerate().skip(1) {
        let hi = edges.get(i).map_or_else(|| "inf".to_string(), |e| e.to_string());
        out.push(Bucket::new(format!("[{},{hi})", edges[i - 1]), n, c, min_n));
    }
    Ok(out)
}

pub fn write_eval_records<W: std::io::Write>(mut out: W, records: &[EvalRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_eval_records(text: &str) -> Result<Vec<EvalRecord>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}
