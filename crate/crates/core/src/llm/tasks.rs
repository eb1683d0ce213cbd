//! The knowledge-organization prompt stages and their line-format parsers.

use crate::kb::{Extraction, FactExtractor};
use crate::model::{QuestionQuadruple, TemporalFact};

use super::prompt::bind;
use super::{ChatMessage, ChatRequest, ChatRole, LlmBackend, LlmError, TaskId, TemplateSet};

/// Marker preceding the fact list in the formulate_answer query.
pub const ENTRIES_MARKER: &str = "Entries:\n";
/// Text bound to the fact list when there are no facts.
pub const NO_ENTRIES: &str = "(no entries)";

const QUADRUPLE_REMINDER: &str =
    "Your reply did not follow the format. Reply with exactly one line: SUBJECT | RELATION | ? | YEAR, where YEAR is a four-digit year or ALL.";

fn parse_year(field: &str) -> Option<Option<i32>> {
    let f = field.trim();
    if f == "-" {
        return Some(None);
    }
    (f.len() == 4 && f.bytes().all(|b| b.is_ascii_digit())).then(|| f.parse().ok())
}

/// Parsed `SUBJECT | RELATION | ? | YEAR-or-ALL`; the first line of `reply`
/// in that shape wins. `None` year means ALL.
pub fn parse_quadruple(reply: &str) -> Result<(QuestionQuadruple, bool), String> {
    for line in reply.lines() {
        let parts: Vec<&str> = line.split('|').map(str::trim).collect();
        if parts.len() != 4 || parts[2] != QuestionQuadruple::PLACEHOLDER {
            continue;
        }
        let year = if parts[3].eq_ignore_ascii_case("all") {
            None
        } else {
            match parse_year(parts[3]) {
                Some(Some(y)) => Some(y),
                _ => continue,
            }
        };
        if let Some(q) = QuestionQuadruple::new(parts[0], parts[1], year) {
            return Ok((q, year.is_none()));
        }
    }
    Err(reply.to_string())
}

/// One `SUBJECT | RELATION | OBJECT | START | END` line.
pub fn parse_fact_line(line: &str) -> Option<TemporalFact> {
    let parts: Vec<&str> = line.split('|').map(str::trim).collect();
    if parts.len() != 5 {
        return None;
    }
    let start = parse_year(parts[3])?;
    let end = parse_year(parts[4])?;
    TemporalFact::new(parts[0], parts[1], parts[2], start, end).ok()
}

/// Parse a multi-line extraction reply. Blank lines are ignored; other
/// unparseable lines are skipped and counted.
pub fn parse_fact_lines(reply: &str) -> Extraction {
    let mut out = Extraction::default();
    for line in reply.lines().filter(|l| !l.trim().is_empty()) {
        match parse_fact_line(line) {
            Some(f) => out.facts.push(f),
            None => out.skipped_lines += 1,
        }
    }
    if out.facts.is_empty() && out.skipped_lines > 0 {
        out.warning = Some(format!(
            "no parseable fact lines among {} reply lines",
            out.skipped_lines
        ));
    }
    out
}

/// Stage 1. Re-asks once with a format reminder before failing.
/// `q_year_hint` fills in the year when the reply says ALL.
pub fn question_to_quadruple(
    question: &str,
    q_year_hint: Option<i32>,
    backend: &dyn LlmBackend,
    templates: &TemplateSet,
) -> Result<QuestionQuadruple, LlmError> {
    let mut request = templates.render(TaskId::QuestionToQuadruple, &bind([("question", question.to_string())]))?;
    let first = backend.chat(TaskId::QuestionToQuadruple, &request)?;
    let parsed = match parse_quadruple(&first.text) {
        Ok(p) => p,
        Err(_) => {
            request.messages.push(ChatMessage::new(ChatRole::Assistant, first.text));
            request
                .messages
                .push(ChatMessage::new(ChatRole::User, QUADRUPLE_REMINDER));
            let second = backend.chat(TaskId::QuestionToQuadruple, &request)?;
            parse_quadruple(&second.text).map_err(|raw| LlmError::Extraction { raw })?
        }
    };
    let (mut quad, all) = parsed;
    if all {
        quad.q_year = q_year_hint;
    }
    Ok(quad)
}

/// Stage 2 for one text. An empty text yields nothing without a call.
pub fn extract_facts(
    document: &str,
    subject: &str,
    backend: &dyn LlmBackend,
    templates: &TemplateSet,
) -> Result<Extraction, LlmError> {
    if document.trim().is_empty() {
        return Ok(Extraction::default());
    }
    let request = templates.render(
        TaskId::ExtractFacts,
        &bind([("subject", subject.to_string()), ("document", document.to_string())]),
    )?;
    let reply = backend.chat(TaskId::ExtractFacts, &request)?;
    let out = parse_fact_lines(&reply.text);
    if let Some(w) = &out.warning {
        tracing::warn!(subject, "{w}");
    }
    Ok(out)
}

/// Stage 3: answer from `facts` alone.
pub fn formulate_answer(
    question: &str,
    facts: &[TemporalFact],
    backend: &dyn LlmBackend,
    templates: &TemplateSet,
) -> Result<String, LlmError> {
    let request = formulate_request(question, facts, templates)?;
    Ok(backend.chat(TaskId::FormulateAnswer, &request)?.text.trim().to_string())
}

pub fn formulate_request(
    question: &str,
    facts: &[TemporalFact],
    templates: &TemplateSet,
) -> Result<ChatRequest, LlmError> {
    let listing = if facts.is_empty() {
        NO_ENTRIES.to_string()
    } else {
        facts.iter().map(TemporalFact::to_line).collect::<Vec<_>>().join("\n")
    };
    templates.render(
        TaskId::FormulateAnswer,
        &bind([("question", question.to_string()), ("facts", listing)]),
    )
}

/// Facts listed in a formulate_answer request, read back from the final
/// entries block. Used by echo-style mocks.
pub fn facts_in_request(request: &ChatRequest) -> Vec<TemporalFact> {
    let user = request.last_user();
    let Some(pos) = user.rfind(ENTRIES_MARKER) else {
        return Vec::new();
    };
    user[pos + ENTRIES_MARKER.len()..]
        .lines()
        .map_while(parse_fact_line)
        .collect()
}

/// Split `text` into windows of at most `budget` chars, breaking at the
/// last whitespace inside a window when there is one.
pub fn windows(text: &str, budget: usize) -> Vec<&str> {
    let budget = budget.max(1);
    let mut out = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        let Some((cut, _)) = rest.char_indices().nth(budget) else {
            out.push(rest);
            break;
        };
        let head = &rest[..cut];
        let split = head
            .char_indices()
            .rev()
            .find(|(_, c)| c.is_whitespace())
            .map(|(i, c)| i + c.len_utf8())
            .filter(|&i| i > 0)
            .unwrap_or(cut);
        out.push(&rest[..split]);
        rest = &rest[split..];
    }
    out
}

/// Fact extractor backed by a chat model. Texts longer than
/// `window_chars` are extracted window by window and the results unioned.
pub struct LlmFactExtractor<'a> {
    backend: &'a dyn LlmBackend,
    templates: &'a TemplateSet,
    window_chars: usize,
}

impl<'a> LlmFactExtractor<'a> {
    pub fn new(backend: &'a dyn LlmBackend, templates: &'a TemplateSet, window_chars: usize) -> Self {
        Self {
            backend,
            templates,
            window_chars: window_chars.max(1),
        }
    }
}

impl FactExtractor for LlmFactExtractor<'_> {
    fn extract(&self, text: &str, subject: &str) -> Result<Extraction, String> {
        let mut all = Extraction::default();
        let mut warnings = Vec::new();
        for window in windows(text, self.window_chars) {
            let part = extract_facts(window, subject, self.backend, self.templates).map_err(|e| e.to_string())?;
            all.facts.extend(part.facts);
            all.skipped_lines += part.skipped_lines;
            warnings.extend(part.warning);
        }
        if !warnings.is_empty() {
            all.warning = Some(warnings.join("; "));
        }
        Ok(all)
    }
}
