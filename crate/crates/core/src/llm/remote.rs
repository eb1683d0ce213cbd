use std::time::Duration;

use rand::RngExt;
use serde_json::{json, Value};

use super::{ChatReply, ChatRequest, LlmBackend, LlmError, TaskId, Usage};

/// Retries on transport errors, 429 and 5xx. `max_retries = 3` means up to
/// four attempts. The wait before retry `n` (0-based) is
/// `min(base * 2^n, max)` plus up to half of that again as jitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry).unwrap_or(u32::MAX);
        let d = self.base_delay.saturating_mul(factor).min(self.max_delay);
        let jitter_ms = (d.as_millis() / 2) as u64;
        let jitter = if jitter_ms == 0 {
            0
        } else {
            rand::rng().random_range(0..=jitter_ms)
        };
        d + Duration::from_millis(jitter)
    }
}

const BODY_EXCERPT_CHARS: usize = 300;

/// JSON-over-HTTP POST client with bounded retries. The API key is sent as
/// a bearer token and never logged.
#[derive(Clone)]
pub struct HttpClient {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient")
            .field("url", &self.url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("retry", &self.retry)
            .finish()
    }
}

impl HttpClient {
    pub fn new(url: impl Into<String>) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            url: url.into(),
            api_key: None,
            retry: RetryPolicy::default(),
        })
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key.filter(|k| !k.is_empty());
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn post_json(&self, body: &Value) -> Result<Value, LlmError> {
        let attempts = self.retry.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.retry.delay(attempt - 1));
            }
            let mut req = self.client.post(&self.url).json(body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Err(e) => {
                    tracing::warn!(url = %self.url, attempt, error = %e, "request failed");
                    last = e.to_string();
                }
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        return resp.json::<Value>().map_err(|e| LlmError::Decode(e.to_string()));
                    }
                    let body: String = resp
                        .text()
                        .unwrap_or_default()
                        .chars()
                        .take(BODY_EXCERPT_CHARS)
                        .collect();
                    if status.as_u16() == 429 || status.is_server_error() {
                        tracing::warn!(url = %self.url, attempt, status = status.as_u16(), "transient status");
                        last = format!("HTTP {}: {body}", status.as_u16());
                    } else {
                        return Err(LlmError::Status {
                            status: status.as_u16(),
                            body,
                        });
                    }
                }
            }
        }
        Err(LlmError::Exhausted { attempts, last })
    }
}

/// Backend for endpoints speaking the chat-completions wire shape:
/// `{model, messages, temperature, max_tokens}` in,
/// `{choices: [{message: {content}}], usage}` out.
#[derive(Debug, Clone)]
pub struct ChatCompletionsBackend {
    name: String,
    http: HttpClient,
    model: String,
}

impl ChatCompletionsBackend {
    pub fn new(http: HttpClient, model: impl Into<String>) -> Self {
        let model = model.into();
        Self {
            name: model.clone(),
            http,
            model,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl LlmBackend for ChatCompletionsBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn chat(&self, task: TaskId, request: &ChatRequest) -> Result<ChatReply, LlmError> {
        request.validate()?;
        let model = if request.model_name.is_empty() {
            &self.model
        } else {
            &request.model_name
        };
        let body = json!({
            "model": model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        tracing::debug!(%task, model = %model, "chat request");
        let resp = self.http.post_json(&body)?;
        let text = resp
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::Decode("missing choices[0].message.content".into()))?
            .to_string();
        let field = |k: &str| {
            resp.pointer(&format!("/usage/{k}"))
                .and_then(Value::as_u64)
                .unwrap_or(0)
        };
        Ok(ChatReply {
            text,
            usage: Usage {
                prompt_tokens: field("prompt_tokens"),
                completion_tokens: field("completion_tokens"),
                total_tokens: field("total_tokens"),
            },
        })
    }
}
