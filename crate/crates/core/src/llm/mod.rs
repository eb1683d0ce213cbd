//! Chat-completion backends, task prompt templates and reply parsers.

mod mock;
mod prompt;
mod remote;
pub mod tasks;

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::{MockBackend, Responder};
pub use prompt::{render_prompt, PromptTemplate, TemplateSet};
pub use remote::{ChatCompletionsBackend, HttpClient, RetryPolicy};

/// Which prompt a request was rendered from. Mock scripts are keyed by it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    QuestionToQuadruple,
    ExtractFacts,
    FormulateAnswer,
    Judge,
    SemanticCheck,
    AnswerClosedBook,
    AnswerWithContext,
}

impl TaskId {
    pub const ALL: [TaskId; 7] = [
        TaskId::QuestionToQuadruple,
        TaskId::ExtractFacts,
        TaskId::FormulateAnswer,
        TaskId::Judge,
        TaskId::SemanticCheck,
        TaskId::AnswerClosedBook,
        TaskId::AnswerWithContext,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::QuestionToQuadruple => "question_to_quadruple",
            TaskId::ExtractFacts => "extract_facts",
            TaskId::FormulateAnswer => "formulate_answer",
            TaskId::Judge => "judge",
            TaskId::SemanticCheck => "semantic_check",
            TaskId::AnswerClosedBook => "answer_closed_book",
            TaskId::AnswerWithContext => "answer_with_context",
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown task id `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: ChatRole, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

/// An empty `model_name` lets the backend use its configured model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default)]
    pub model_name: String,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), LlmError> {
        match self.messages.first() {
            None => return Err(LlmError::InvalidRequest("no messages".into())),
            Some(m) if m.role == ChatRole::Assistant => {
                return Err(LlmError::InvalidRequest("first message must be system or user".into()))
            }
            _ => {}
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(LlmError::InvalidRequest(format!("temperature {}", self.temperature)));
        }
        Ok(())
    }

    /// Total characters across all messages.
    pub fn prompt_chars(&self) -> usize {
        self.messages.iter().map(|m| m.content.chars().count()).sum()
    }

    /// Content of the last user message.
    pub fn last_user(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == ChatRole::User)
            .map_or("", |m| m.content.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatReply {
    pub text: String,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("mock backend `{backend}` has no scripted reply left for {task}")]
    ScriptExhausted { backend: String, task: TaskId },
    #[error("scripted failure: {0}")]
    Scripted(String),
    #[error("cannot decode response: {0}")]
    Decode(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unbound: {0}")]
    Unbound(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("unparseable reply after re-ask: {raw:?}")]
    Extraction { raw: String },
}

/// A chat-completion endpoint. Implementations are shareable across
/// threads; each call carries its own retry state.
pub trait LlmBackend: Send + Sync {
    fn name(&self) -> &str;

    fn chat(&self, task: TaskId, request: &ChatRequest) -> Result<ChatReply, LlmError>;

    /// True when replies depend on call order, as with a scripted mock.
    /// Callers then issue requests sequentially.
    fn order_sensitive(&self) -> bool {
        false
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for Arc<B> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn chat(&self, task: TaskId, request: &ChatRequest) -> Result<ChatReply, LlmError> {
        (**self).chat(task, request)
    }
    fn order_sensitive(&self) -> bool {
        (**self).order_sensitive()
    }
}

/// Caps the number of concurrent calls into a backend.
pub struct InFlightLimit<B> {
    inner: B,
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

impl<B: LlmBackend> InFlightLimit<B> {
    pub fn new(inner: B, limit: usize) -> Self {
        Self {
            inner,
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }
}

impl<B: LlmBackend> LlmBackend for InFlightLimit<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn chat(&self, task: TaskId, request: &ChatRequest) -> Result<ChatReply, LlmError> {
        {
            let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
            while *active >= self.limit {
                active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
            }
            *active += 1;
        }
        let out = self.inner.chat(task, request);
        *self.active.lock().unwrap_or_else(|e| e.into_inner()) -= 1;
        self.freed.notify_one();
        out
    }

    fn order_sensitive(&self) -> bool {
        self.inner.order_sensitive()
    }
}

/// Map a constrained YES/NO reply to a boolean. Only the first word counts.
pub fn parse_yes_no(text: &str) -> Option<bool> {
    let word: String = text
        .trim_start()
        .chars()
        .take_while(|c| c.is_alphabetic())
        .collect::<String>()
        .to_ascii_uppercase();
    match word.as_str() {
        "YES" => Some(true),
        "NO" => Some(false),
        _ => None,
    }
}
