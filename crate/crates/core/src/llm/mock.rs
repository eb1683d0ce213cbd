use std::collections::{BTreeMap, VecDeque};
use std::sync::Mutex;

use serde::Deserialize;

use super::{ChatReply, ChatRequest, LlmBackend, LlmError, TaskId, Usage};

/// Computes a reply from the request; `None` falls through to an error.
pub type Responder = Box<dyn Fn(TaskId, &ChatRequest) -> Option<String> + Send + Sync>;

#[derive(Debug, Clone)]
enum Entry {
    Reply(String),
    Fail(String),
}

#[derive(Debug, Default)]
struct Script {
    queue: VecDeque<Entry>,
    /// Served forever once the queue is empty.
    sticky: Option<Entry>,
}

/// Deterministic backend for tests and offline runs.
///
/// Each task has a queue of scripted replies consumed in order. When a
/// task's queue is empty the optional responder is consulted; otherwise the
/// call fails with [`LlmError::ScriptExhausted`].
pub struct MockBackend {
    name: String,
    scripts: Mutex<BTreeMap<TaskId, Script>>,
    responder: Option<Responder>,
    log: Mutex<Vec<(TaskId, ChatRequest)>>,
}

impl std::fmt::Debug for MockBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockBackend")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

impl MockBackend {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            scripts: Mutex::new(BTreeMap::new()),
            responder: None,
            log: Mutex::new(Vec::new()),
        }
    }

    /// A mock whose replies are computed by `f`. Such a mock is
    /// order-insensitive as long as nothing is scripted on top.
    pub fn with_responder(
        name: impl Into<String>,
        f: impl Fn(TaskId, &ChatRequest) -> Option<String> + Send + Sync + 'static,
    ) -> Self {
        Self {
            responder: Some(Box::new(f)),
            ..Self::new(name)
        }
    }

    pub fn push(&self, task: TaskId, reply: impl Into<String>) {
        self.push_entry(task, Entry::Reply(reply.into()));
    }

    pub fn push_error(&self, task: TaskId, message: impl Into<String>) {
        self.push_entry(task, Entry::Fail(message.into()));
    }

    /// Serve `reply` for `task` whenever its queue is empty.
    pub fn set_default(&self, task: TaskId, reply: impl Into<String>) {
        self.lock_scripts().entry(task).or_default().sticky = Some(Entry::Reply(reply.into()));
    }

    fn push_entry(&self, task: TaskId, entry: Entry) {
        self.lock_scripts().entry(task).or_default().queue.push_back(entry);
    }

    fn lock_scripts(&self) -> std::sync::MutexGuard<'_, BTreeMap<TaskId, Script>> {
        self.scripts.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Load a script of `{task_id, reply}` JSON lines. A line may carry
    /// `"error": "..."` instead of a reply to script a failure, and
    /// `"repeat": true` to make the reply the task's default.
    pub fn from_jsonl(name: impl Into<String>, text: &str) -> Result<Self, String> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Line {
            task_id: TaskId,
            #[serde(default)]
            reply: Option<String>,
            #[serde(default)]
            error: Option<String>,
            #[serde(default)]
            repeat: bool,
        }
        let mock = Self::new(name);
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: Line = serde_json::from_str(raw).map_err(|e| format!("line {}: {e}", i + 1))?;
            let entry = match (line.reply, line.error) {
                (Some(r), None) => Entry::Reply(r),
                (None, Some(e)) => Entry::Fail(e),
                _ => return Err(format!("line {}: exactly one of `reply` or `error` is required", i + 1)),
            };
            if line.repeat {
                mock.lock_scripts().entry(line.task_id).or_default().sticky = Some(entry);
            } else {
                mock.push_entry(line.task_id, entry);
            }
        }
        Ok(mock)
    }

    /// Every request received so far, in call order.
    pub fn requests(&self) -> Vec<(TaskId, ChatRequest)> {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn remaining(&self, task: TaskId) -> usize {
        self.lock_scripts().get(&task).map_or(0, |s| s.queue.len())
    }
}

impl LlmBackend for MockBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn chat(&self, task: TaskId, request: &ChatRequest) -> Result<ChatReply, LlmError> {
        request.validate()?;
        self.log
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push((task, request.clone()));
        let entry = {
            let mut scripts = self.lock_scripts();
            scripts
                .get_mut(&task)
                .and_then(|s| s.queue.pop_front().or_else(|| s.sticky.clone()))
        };
        let text = match entry {
            Some(Entry::Reply(r)) => r,
            Some(Entry::Fail(e)) => return Err(LlmError::Scripted(e)),
            None => match self.responder.as_ref().and_then(|f| f(task, request)) {
                Some(r) => r,
                None => {
                    return Err(LlmError::ScriptExhausted {
                        backend: self.name.clone(),
                        task,
                    })
                }
            },
        };
        let prompt_tokens = request
            .messages
            .iter()
            .map(|m| m.content.split_whitespace().count() as u64)
            .sum();
        let completion_tokens = text.split_whitespace().count() as u64;
        Ok(ChatReply {
            text,
            usage: Usage {
                prompt_tokens,
                completion_tokens,
                total_tokens: prompt_tokens + completion_tokens,
            },
        })
    }

    fn order_sensitive(&self) -> bool {
        self.lock_scripts().values().any(|s| !s.queue.is_empty())
    }
}
