//! Backend construction. Endpoints and keys come from the environment
//! only and are never echoed into manifests or logs.

use std::path::Path;

use anyhow::Result;
use driftqa_core::kb::RuleExtractor;
use driftqa_core::llm::{
    ChatCompletionsBackend, ChatReply, ChatRequest, HttpClient, InFlightLimit, LlmBackend, LlmError, MockBackend,
    TaskId, TemplateSet,
};
use driftqa_core::retrieval::{EmbeddingBackend, HashingEmbedder, RemoteEmbedder};
use driftqa_core::Exec;

use crate::{paths, usage};

pub const CHAT_URL: &str = "DRIFTQA_CHAT_URL";
pub const CHAT_MODEL: &str = "DRIFTQA_CHAT_MODEL";
pub const API_KEY: &str = "DRIFTQA_API_KEY";
pub const EMBED_URL: &str = "DRIFTQA_EMBED_URL";
pub const EMBED_MODEL: &str = "DRIFTQA_EMBED_MODEL";
pub const EMBED_API_KEY: &str = "DRIFTQA_EMBED_API_KEY";
pub const JUDGE_URLS: &str = "DRIFTQA_JUDGE_URLS";
pub const JUDGE_MODELS: &str = "DRIFTQA_JUDGE_MODELS";
pub const JUDGE_API_KEY: &str = "DRIFTQA_JUDGE_API_KEY";

fn env(name: &str) -> Option<String> {
    std::env::var(name)
        .ok()
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
}

/// Renames a backend so records carry a chosen model label.
pub struct Labeled {
    inner: Box<dyn LlmBackend>,
    name: String,
}

impl LlmBackend for Labeled {
    fn name(&self) -> &str {
        &self.name
    }
    fn chat(&self, task: TaskId, request: &ChatRequest) -> Result<ChatReply, LlmError> {
        self.inner.chat(task, request)
    }
    fn order_sensitive(&self) -> bool {
        self.inner.order_sensitive()
    }
}

pub fn mock_from_file(path: &Path) -> Result<MockBackend> {
    let text = paths::read_text(path)?;
    let name = path
        .file_stem()
        .map_or_else(|| "mock".to_string(), |s| s.to_string_lossy().into_owned());
    MockBackend::from_jsonl(name, &text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// The answering model: a mock script when given, else the environment.
pub fn chat_backend(mock_script: Option<&Path>, label: Option<&str>, jobs: usize) -> Result<Box<dyn LlmBackend>> {
    let inner: Box<dyn LlmBackend> = match mock_script {
        Some(path) => Box::new(mock_from_file(path)?),
        None => {
            let url =
                env(CHAT_URL).ok_or_else(|| usage(format!("no chat backend: pass --mock-script or set {CHAT_URL}")))?;
            let model = env(CHAT_MODEL).ok_or_else(|| usage(format!("{CHAT_URL} is set but {CHAT_MODEL} is not")))?;
            let http = HttpClient::new(url)
                .map_err(|e| usage(e.to_string()))?
                .with_api_key(env(API_KEY));
            Box::new(InFlightLimit::new(ChatCompletionsBackend::new(http, model), jobs))
        }
    };
    Ok(match label {
        Some(name) => Box::new(Labeled {
            inner,
            name: name.to_string(),
        }),
        None => inner,
    })
}

/// Judges from mock scripts, then from the comma-separated environment
/// lists. An empty result means no judging.
pub fn judges(mock_scripts: &[impl AsRef<Path>], jobs: usize) -> Result<Vec<Box<dyn LlmBackend>>> {
    let mut out: Vec<Box<dyn LlmBackend>> = Vec::new();
    for path in mock_scripts {
        out.push(Box::new(mock_from_file(path.as_ref())?));
    }
    if let Some(urls) = env(JUDGE_URLS) {
        let urls: Vec<&str> = urls.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        let models = env(JUDGE_MODELS).unwrap_or_default();
        let models: Vec<&str> = models.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        if models.len() != urls.len() {
            return Err(usage(format!(
                "{JUDGE_URLS} lists {} endpoints but {JUDGE_MODELS} lists {} models",
                urls.len(),
                models.len()
            )));
        }
        for (url, model) in urls.into_iter().zip(models) {
            let http = HttpClient::new(url)
                .map_err(|e| usage(e.to_string()))?
                .with_api_key(env(JUDGE_API_KEY));
            out.push(Box::new(InFlightLimit::new(
                ChatCompletionsBackend::new(http, model),
                jobs,
            )));
        }
    }
    Ok(out)
}

/// Remote embeddings when configured, else the seeded hashing embedder.
pub fn embedder(dim: usize, seed: u64, exec: Exec) -> Result<Box<dyn EmbeddingBackend>> {
    match env(EMBED_URL) {
        Some(url) => {
            let model =
                env(EMBED_MODEL).ok_or_else(|| usage(format!("{EMBED_URL} is set but {EMBED_MODEL} is not")))?;
            let http = HttpClient::new(url)
                .map_err(|e| usage(e.to_string()))?
                .with_api_key(env(EMBED_API_KEY).or_else(|| env(API_KEY)));
            Ok(Box::new(RemoteEmbedder::new(http, model, dim)))
        }
        None => Ok(Box::new(HashingEmbedder::new(dim, seed).with_exec(exec))),
    }
}

pub fn templates(dir: Option<&Path>) -> Result<TemplateSet> {
    match dir {
        Some(d) => TemplateSet::with_overrides(d).map_err(|e| usage(e.to_string())),
        None => Ok(TemplateSet::default()),
    }
}

/// Rules file: one `phrase => relation` per line; `#` starts a comment.
pub fn extraction_rules(path: &Path) -> Result<RuleExtractor> {
    let text = paths::read_text(path)?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let (phrase, relation) = line
            .split_once("=>")
            .map(|(a, b)| (a.trim(), b.trim()))
            .filter(|(a, b)| !a.is_empty() && !b.is_empty())
            .ok_or_else(|| usage(format!("{}:{}: expected `phrase => relation`", path.display(), i + 1)))?;
        pairs.push((phrase.to_string(), relation.to_string()));
    }
    if pairs.is_empty() {
        return Err(usage(format!("{}: no rules", path.display())));
    }
    Ok(RuleExtractor::new(pairs.iter().map(|(a, b)| (a.as_str(), b.as_str()))))
}
