//! Versioned prompt templates stored as plain-text assets.
//!
//! Asset layout:
//!
//! ```text
//! task = judge
//! version = 1
//! max_tokens = 8
//! [system]
//! ...
//! [instructions]
//! ...
//! [example.input]
//! ...
//! [example.output]
//! ...
//! [query]
//! Question: {{question}}
//! ```
//!
//! Example sections come in input/output pairs and keep file order.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use super::{ChatMessage, ChatRequest, ChatRole, LlmError, TaskId};

const BUILTIN: [(TaskId, &str); 7] = [
    (
        TaskId::QuestionToQuadruple,
        include_str!("../../assets/templates/question_to_quadruple.txt"),
    ),
    (
        TaskId::ExtractFacts,
        include_str!("../../assets/templates/extract_facts.txt"),
    ),
    (
        TaskId::FormulateAnswer,
        include_str!("../../assets/templates/formulate_answer.txt"),
    ),
    (TaskId::Judge, include_str!("../../assets/templates/judge.txt")),
    (
        TaskId::SemanticCheck,
        include_str!("../../assets/templates/semantic_check.txt"),
    ),
    (
        TaskId::AnswerClosedBook,
        include_str!("../../assets/templates/answer_closed_book.txt"),
    ),
    (
        TaskId::AnswerWithContext,
        include_str!("../../assets/templates/answer_with_context.txt"),
    ),
];

const SECTIONS: [&str; 5] = ["system", "instructions", "example.input", "example.output", "query"];

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{\s*([A-Za-z0-9_]+)\s*\}\}").expect("static regex"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub task_id: TaskId,
    pub version: u32,
    pub max_tokens: u32,
    pub system: String,
    pub instructions: String,
    pub few_shot_examples: Vec<(String, String)>,
    pub query: String,
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let bad = |m: String| LlmError::Template(m);
        let mut header: BTreeMap<String, String> = BTreeMap::new();
        let mut sections: Vec<(String, Vec<&str>)> = Vec::new();
        for line in text.lines() {
            let trimmed = line.trim_end();
            let section = trimmed
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .filter(|s| SECTIONS.contains(s));
            if let Some(name) = section {
                sections.push((name.to_string(), Vec::new()));
            } else if let Some((_, body)) = sections.last_mut() {
                body.push(line);
            } else if !trimmed.is_empty() {
                let (k, v) = trimmed
                    .split_once('=')
                    .ok_or_else(|| bad(format!("header line without `=`: {trimmed}")))?;
                header.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let task_id: TaskId = header
            .get("task")
            .ok_or_else(|| bad("missing `task`".into()))?
            .parse()
            .map_err(bad)?;
        let num = |k: &str, default: Option<u32>| -> Result<u32, LlmError> {
            match header.get(k) {
                Some(v) => v.parse().map_err(|_| bad(format!("bad `{k}`: {v}"))),
                None => default.ok_or_else(|| bad(format!("missing `{k}`"))),
            }
        };
        let version = num("version", None)?;
        let max_tokens = num("max_tokens", Some(256))?;

        let mut t = PromptTemplate {
            task_id,
            version,
            max_tokens,
            system: String::new(),
            instructions: String::new(),
            few_shot_examples: Vec::new(),
            query: String::new(),
        };
        let mut pending_input: Option<String> = None;
        for (name, body) in sections {
            let body = body.join("\n").trim().to_string();
            match name.as_str() {
                "system" => t.system = body,
                "instructions" => t.instructions = body,
                "query" => t.query = body,
                "example.input" => {
                    if pending_input.replace(body).is_some() {
                        return Err(bad("example.input without example.output".into()));
                    }
                }
                "example.output" => {
                    let input = pending_input
                        .take()
                        .ok_or_else(|| bad("example.output without example.input".into()))?;
                    t.few_shot_examples.push((input, body));
                }
                other => return Err(bad(format!("unknown section [{other}]"))),
            }
        }
        if pending_input.is_some() {
            return Err(bad("trailing example.input".into()));
        }
        if t.few_shot_examples.is_empty() {
            return Err(bad(format!("{task_id} template has no examples")));
        }
        if t.query.is_empty() {
            return Err(bad(format!("{task_id} template has no [query]")));
        }
        Ok(t)
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        [&self.system, &self.instructions, &self.query]
            .into_iter()
            .flat_map(|s| placeholder_re().captures_iter(s))
            .map(|c| c[1].to_string())
            .filter(|n| seen.insert(n.clone()))
            .collect()
    }
}

/// Substitutes every `{{name}}` in one pass; bound values are not rescanned.
fn substitute(text: &str, bindings: &BTreeMap<String, String>) -> Result<String, LlmError> {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for caps in placeholder_re().captures_iter(text) {
        let m = caps.get(0).expect("whole match");
        let name = &caps[1];
        let value = bindings.get(name).ok_or_else(|| LlmError::Unbound(name.to_string()))?;
        out.push_str(&text[last..m.start()]);
        out.push_str(value);
        last = m.end();
    }
    out.push_str(&text[last..]);
    Ok(out)
}

/// Assemble a request: the system text as a system message, then one user
/// message holding the instructions, the examples in file order and the
/// bound query.
pub fn render_prompt(template: &PromptTemplate, bindings: &BTreeMap<String, String>) -> Result<ChatRequest, LlmError> {
    if let Some(name) = template.placeholders().into_iter().find(|n| !bindings.contains_key(n)) {
        return Err(LlmError::Unbound(name));
    }
    let mut user = substitute(&template.instructions, bindings)?;
    for (i, (input, output)) in template.few_shot_examples.iter().enumerate() {
        user.push_str(&format!("\n\nExample {}\nInput:\n{input}\nOutput:\n{output}", i + 1));
    }
    user.push_str("\n\n");
    user.push_str(&substitute(&template.query, bindings)?);
    let mut messages = Vec::with_capacity(2);
    if !template.system.is_empty() {
        messages.push(ChatMessage::new(
            ChatRole::System,
            substitute(&template.system, bindings)?,
        ));
    }
    messages.push(ChatMessage::new(ChatRole::User, user));
    Ok(ChatRequest {
        messages,
        temperature: 0.0,
        max_tokens: template.max_tokens,
        model_name: String::new(),
    })
}

/// One template per task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<TaskId, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        static BUILT: OnceLock<TemplateSet> = OnceLock::new();
        BUILT
            .get_or_init(|| {
                let templates = BUILTIN
                    .iter()
                    .map(|(task, text)| {
                        let t = PromptTemplate::parse(text).expect("embedded template parses");
                        assert_eq!(t.task_id, *task, "embedded template task id");
                        (*task, t)
                    })
                    .collect();
                TemplateSet { templates }
            })
            .clone()
    }
}

impl TemplateSet {
    /// Built-in templates, overridden by any `<task_id>.txt` in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self, LlmError> {
        let mut set = Self::default();
        for task in TaskId::ALL {
            let path = dir.join(format!("{task}.txt"));
            if path.exists() {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| LlmError::Template(format!("{}: {e}", path.display())))?;
                let t = PromptTemplate::parse(&text)?;
                if t.task_id != task {
                    return Err(LlmError::Template(format!(
                        "{} declares task {}",
                        path.display(),
                        t.task_id
                    )));
                }
                set.templates.insert(task, t);
            }
        }
        Ok(set)
    }

    pub fn get(&self, task: TaskId) -> &PromptTemplate {
        &self.templates[&task]
    }

    pub fn render(&self, task: TaskId, bindings: &BTreeMap<String, String>) -> Result<ChatRequest, LlmError> {
        render_prompt(self.get(task), bindings)
    }

    pub fn versions(&self) -> BTreeMap<String, u32> {
        self.templates.iter().map(|(k, t)| (k.to_string(), t.version)).collect()
    }
}

/// Build a binding map from pairs.
pub(crate) fn bind<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
