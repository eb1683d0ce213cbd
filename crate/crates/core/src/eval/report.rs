//! Result tables and figure data as aligned text and CSV.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{bucket_by_doc_length, bucket_by_fact_changes, AccuracyBasis, Bucket, Consensus, EvalError, EvalRecord};
use crate::model::EvidenceMode;
use crate::pipeline::PipelineKind;

/// Cell text for a column with no records.
pub const MISSING: &str = "N/A";

pub const DEFAULT_LENGTH_EDGES: [usize; 6] = [0, 5_000, 10_000, 20_000, 40_000, 80_000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// ICL closest/latest, RAG closest/latest/cumulative, KO.
    TemporalWiki,
    /// ICL, RAG, KO over unified documents.
    UnifiedClark,
}

impl FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "temporal_wiki" => Ok(Layout::TemporalWiki),
            "unified_clark" => Ok(Layout::UnifiedClark),
            _ => Err(format!(
                "unknown layout `{s}` (expected temporal_wiki or unified_clark)"
            )),
        }
    }
}

impl Layout {
    pub fn infer(records: &[EvalRecord]) -> Self {
        if records.iter().any(|r| r.record.snapshot_mode == EvidenceMode::Unified) {
            Layout::UnifiedClark
        } else {
            Layout::TemporalWiki
        }
    }

    /// `(group, sub-header, pipeline, mode)`; a `None` mode matches any.
    fn columns(self) -> Vec<(&'static str, &'static str, PipelineKind, Option<EvidenceMode>)> {
        match self {
            Layout::TemporalWiki => vec![
                ("ICL", "Closest", PipelineKind::Icl, Some(EvidenceMode::Closest)),
                ("ICL", "Latest", PipelineKind::Icl, Some(EvidenceMode::Latest)),
                ("RAG", "Closest", PipelineKind::Rag, Some(EvidenceMode::Closest)),
                ("RAG", "Latest", PipelineKind::Rag, Some(EvidenceMode::Latest)),
                ("RAG", "Cumulative", PipelineKind::Rag, Some(EvidenceMode::Cumulative)),
                ("Knowledge Org.", "", PipelineKind::Ko, None),
            ],
            Layout::UnifiedClark => vec![
                ("ICL", "", PipelineKind::Icl, Some(EvidenceMode::Unified)),
                ("RAG", "", PipelineKind::Rag, Some(EvidenceMode::Unified)),
                ("KO", "", PipelineKind::Ko, Some(EvidenceMode::Unified)),
            ],
        }
    }

    fn csv_key(group: &str, sub: &str) -> String {
        let g = match group {
            "Knowledge Org." => "ko",
            other => other,
        };
        if sub.is_empty() {
            g.to_ascii_lowercase()
        } else {
            format!("{}_{}", g.to_ascii_lowercase(), sub.to_ascii_lowercase())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub table_text: String,
    pub table_csv: String,
    /// Per model and column: consensus categories, reported separately
    /// from accuracy.
    pub counts_csv: String,
    pub fact_change_csv: String,
    pub doc_length_csv: String,
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    n: usize,
    correct: usize,
    by_consensus: [usize; 4],
}

fn consensus_slot(c: Consensus) -> usize {
    match c {
        Consensus::Correct => 0,
        Consensus::Incorrect => 1,
        Consensus::Disagreement => 2,
        Consensus::Unevaluated => 3,
    }
}

fn fmt_acc(t: Option<&Tally>) -> String {
    match t {
        Some(t) if t.n > 0 => format!("{:.2}", t.correct as f64 / t.n as f64),
        _ => MISSING.to_string(),
    }
}

fn bucket_csv(buckets: &[Bucket]) -> String {
    let mut s = String::from("bucket,n,accuracy\n");
    for b in buckets {
        let acc = b.accuracy.map_or_else(|| MISSING.to_string(), |a| format!("{a:.4}"));
        let _ = writeln!(s, "{},{},{}", csv_field(&b.label), b.n, acc);
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Render the accuracy table and both figure datasets. Rows are models in
/// sorted order; zero-shot records are not a column and are ignored.
pub fn report(
    records: &[EvalRecord],
    layout: Layout,
    basis: AccuracyBasis,
    length_edges: &[usize],
    min_n: usize,
) -> Result<Report, EvalError> {
    let columns = layout.columns();
    let mut cells: BTreeMap<(String, usize), Tally> = BTreeMap::new();
    let mut models: BTreeSet<String> = BTreeSet::new();
    for r in records {
        if r.record.pipeline == PipelineKind::Zs {
            continue;
        }
        let Some(col) = columns
            .iter()
            .position(|&(_, _, p, m)| p == r.record.pipeline && m.is_none_or(|m| m == r.record.snapshot_mode))
        else {
            continue;
        };
        models.insert(r.record.model.clone());
        let t = cells.entry((r.record.model.clone(), col)).or_default();
        t.n += 1;
        t.correct += usize::from(basis.is_correct(r));
        t.by_consensus[consensus_slot(r.verdict.consensus)] += 1;
    }

    let header: Vec<String> = std::iter::once("model".to_string())
        .chain(columns.iter().map(|(g, s, _, _)| Layout::csv_key(g, s)))
        .collect();
    let mut table_csv = header.join(",") + "\n";
    let mut rows: Vec<Vec<String>> = Vec::new();
    for m in &models {
        let mut row = vec![m.clone()];
        row.extend((0..columns.len()).map(|c| fmt_acc(cells.get(&(m.clone(), c)))));
        table_csv.push_str(&row.iter().map(|f| csv_field(f)).collect::<Vec<_>>().join(","));
        table_csv.push('\n');
        rows.push(row);
    }

    let mut counts_csv = String::from("model,column,n,correct,incorrect,disagreement,unevaluated\n");
    for ((m, c), t) in &cells {
        let (g, s, _, _) = columns[*c];
        let [a, b, d, u] = t.by_consensus;
        let _ = writeln!(
            counts_csv,
            "{},{},{},{a},{b},{d},{u}",
            csv_field(m),
            Layout::csv_key(g, s),
            t.n
        );
    }

    let scored: Vec<EvalRecord> = records
        .iter()
        .filter(|r| r.record.pipeline != PipelineKind::Zs)
        .cloned()
        .collect();
    Ok(Report {
        table_text: render_text(&columns, &rows),
        table_csv,
        counts_csv,
        fact_change_csv: bucket_csv(&bucket_by_fact_changes(&scored, basis, min_n)),
        doc_length_csv: bucket_csv(&bucket_by_doc_length(&scored, length_edges, basis, min_n)?),
    })
}

type Column = (&'static str, &'static str, PipelineKind, Option<EvidenceMode>);

/// Two header rows: column groups spanning their sub-columns, then the
/// sub-headers.
fn render_text(columns: &[Column], rows: &[Vec<String>]) -> String {
    let n = columns.len() + 1;
    let mut width = vec![0usize; n];
    width[0] = "Model".len();
    for (i, (g, s, _, _)) in columns.iter().enumerate() {
        width[i + 1] = s.chars().count().max(MISSING.len()).max(4);
        let span = columns.iter().filter(|c| c.0 == *g).count();
        if span == 1 {
            width[i + 1] = width[i + 1].max(g.chars().count());
        }
    }
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            width[i] = width[i].max(cell.chars().count());
        }
    }
    // Widen the last column of each group until the group label fits.
    let mut i = 0;
    while i < columns.len() {
        let g = columns[i].0;
        let mut j = i;
        while j + 1 < columns.len() && columns[j + 1].0 == g {
            j += 1;
        }
        let span: usize = (i..=j).map(|k| width[k + 1]).sum::<usize>() + 3 * (j - i);
        if span < g.chars().count() {
            width[j + 1] += g.chars().count() - span;
        }
        i = j + 1;
    }

    let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w.saturating_sub(s.chars().count())));
    let mut out = String::new();

    let mut top = vec![pad("Model", width[0])];
    let mut i = 0;
    while i < columns.len() {
        let g = columns[i].0;
        let mut j = i;
        while j + 1 < columns.len() && columns[j + 1].0 == g {
            j += 1;
        }
        let span: usize = (i..=j).map(|k| width[k + 1]).sum::<usize>() + 3 * (j - i);
        top.push(pad(g, span));
        i = j + 1;
    }
    out.push_str(top.join(" | ").trim_end());
    out.push('\n');

    let mut sub = vec![pad("", width[0])];
    sub.extend(columns.iter().enumerate().map(|(i, c)| pad(c.1, width[i + 1])));
    out.push_str(sub.join(" | ").trim_end());
    out.push('\n');

    out.push_str(&width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    out.push('\n');

    for row in rows {
        let cells: Vec<String> = row.iter().enumerate().map(|(i, c)| pad(c, width[i])).collect();
        out.push_str(cells.join(" | ").trim_end());
        out.push('\n');
    }
    out
}
