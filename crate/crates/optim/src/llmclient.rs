//! Chat-completion backends: an HTTP client speaking the OpenAI-compatible
//! wire format, the deterministic scripted backend, and a replay backend
//! for tests. All satisfy the same [`ChatBackend`] contract and are safe to
//! share across concurrent calls.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::time::Duration;

use serde_json::json;
use thiserror::Error;

use opto_core::{Graph, NodeId, NodeSet};

use crate::scripted::{
    detect_env_kind, opro_binmatch_propose, parse_memory_blocks, scripted_propose, ReportView,
};
use crate::suggestion::Suggestion;

pub const ENV_API_KEY: &str = "OPTO_API_KEY";
pub const ENV_BASE_URL: &str = "OPTO_BASE_URL";
pub const ENV_MODEL: &str = "OPTO_MODEL";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// API key wrapper that never prints its contents.
#[derive(Clone)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        ApiKey(key.into())
    }

    pub(crate) fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ApiKey(redacted)")
    }
}

#[derive(Debug, Clone)]
pub struct BackendConfig {
    /// Base URL up to but excluding `/chat/completions`.
    pub base_url: String,
    pub api_key: ApiKey,
    pub model: String,
    pub temperature: f64,
    pub timeout: Duration,
    pub max_retries: u32,
    /// First retry delay; doubles per retry (1s, 2s, 4s by default).
    pub backoff_base: Duration,
}

impl BackendConfig {
    pub fn new(base_url: &str, api_key: ApiKey, model: &str) -> Self {
        BackendConfig {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            model: model.to_string(),
            temperature: 0.0,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff_base: Duration::from_secs(1),
        }
    }

    /// Reads OPTO_API_KEY (required), OPTO_BASE_URL and OPTO_MODEL.
    pub fn from_env() -> Result<Self, BackendError> {
        let api_key = std::env::var(ENV_API_KEY)
            .map_err(|_| BackendError::MissingEnv(ENV_API_KEY.to_string()))?;
        let base_url =
            std::env::var(ENV_BASE_URL).unwrap_or_else(|_| "https://api.openai.com/v1".to_string());
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| "gpt-4o-mini".to_string());
        Ok(BackendConfig::new(&base_url, ApiKey::new(api_key), &model))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BackendReply {
    pub content: String,
    /// Token usage as reported by the server, when available.
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

impl BackendReply {
    pub fn text(content: impl Into<String>) -> Self {
        BackendReply {
            content: content.into(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("missing environment variable {0}")]
    MissingEnv(String),
}

/// Live-trace context an optimizer hands to its backend alongside the
/// prompt. HTTP backends ignore it; the scripted backend uses the gradients
/// to pick numeric step directions.
pub struct TraceCtx<'a> {
    pub graph: &'a Graph,
    pub params: &'a [NodeId],
    pub output: NodeId,
    pub subgraph: &'a NodeSet,
    pub gradients: Option<&'a BTreeMap<NodeId, f64>>,
}

/// The backend contract: one completion per call.
pub trait ChatBackend {
    fn complete(
        &self,
        messages: &[ChatMessage],
        ctx: Option<&TraceCtx<'_>>,
    ) -> Result<BackendReply, BackendError>;
}

impl<T: ChatBackend + ?Sized> ChatBackend for Box<T> {
    fn complete(
        &self,
        messages: &[ChatMessage],
        ctx: Option<&TraceCtx<'_>>,
    ) -> Result<BackendReply, BackendError> {
        (**self).complete(messages, ctx)
    }
}

/// OpenAI-compatible chat-completions client with bounded retries
/// (exponential backoff on 429/5xx and transport errors; other 4xx fail
/// immediately).
pub struct HttpBackend {
    config: BackendConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Self {
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build();
        HttpBackend {
            config,
            agent: agent_config.into(),
        }
    }

    pub fn from_env() -> Result<Self, BackendError> {
        Ok(HttpBackend::new(BackendConfig::from_env()?))
    }

    fn request_once(&self, body: &serde_json::Value) -> Result<BackendReply, BackendError> {
        let url = format!("{}/chat/completions", self.config.base_url);
        let mut response = self
            .agent
            .post(&url)
            .header(
                "Authorization",
                &format!("Bearer {}", self.config.api_key.expose()),
            )
            .header("Content-Type", "application/json")
            .send_json(body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::HttpStatus { status, body: text });
        }
        let json: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        let content = json
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .ok_or_else(|| {
                BackendError::MalformedResponse("missing choices[0].message.content".to_string())
            })?
            .to_string();
        Ok(BackendReply {
            content,
            prompt_tokens: json.pointer("/usage/prompt_tokens").and_then(|v| v.as_u64()),
            completion_tokens: json
                .pointer("/usage/completion_tokens")
                .and_then(|v| v.as_u64()),
        })
    }

    fn retryable(error: &BackendError) -> bool {
        match error {
            BackendError::Transport(_) => true,
            BackendError::HttpStatus { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

impl ChatBackend for HttpBackend {
    fn complete(
        &self,
        messages: &[ChatMessage],
        _ctx: Option<&TraceCtx<'_>>,
    ) -> Result<BackendReply, BackendError> {
        for message in messages {
            if message.role != Role::Assistant && message.content.is_empty() {
                return Err(BackendError::InvalidRequest(
                    "system/user message content must be non-empty".to_string(),
                ));
            }
        }
        if self.config.temperature < 0.0 {
            return Err(BackendError::InvalidRequest(
                "temperature must be non-negative".to_string(),
            ));
        }
        let body = json!({
            "model": self.config.model,
            "messages": messages
                .iter()
                .map(|m| json!({ "role": m.role.as_str(), "content": m.content }))
                .collect::<Vec<_>>(),
            "temperature": self.config.temperature,
        });
        let mut attempt = 0u32;
        loop {
            match self.request_once(&body) {
                Ok(reply) => return Ok(reply),
                Err(error) => {
                    if attempt >= self.config.max_retries || !Self::retryable(&error) {
                        return Err(error);
                    }
                    let delay = self.config.backoff_base * 2u32.pow(attempt);
                    std::thread::sleep(delay);
                    attempt += 1;
                }
            }
        }
    }
}

/// Sends one chat completion with the given configuration.
pub fn complete(
    messages: &[ChatMessage],
    config: &BackendConfig,
) -> Result<BackendReply, BackendError> {
    HttpBackend::new(config.clone()).complete(messages, None)
}

/// Deterministic backend that extracts the report from the user message
/// and delegates to the scripted proposers. Unrecognizable input yields
/// TERMINATE rather than an error.
pub struct ScriptedBackend {
    rng: AtomicU64,
}

impl Default for ScriptedBackend {
    fn default() -> Self {
        ScriptedBackend::new(0)
    }
}

impl ScriptedBackend {
    pub fn new(seed: u64) -> Self {
        ScriptedBackend {
            rng: AtomicU64::new(seed.wrapping_mul(0x2545_F491_4F6C_DD1D).wrapping_add(1)),
        }
    }

    fn suggestion_to_text(suggestion: &Suggestion) -> String {
        if suggestion.terminate {
            return "TERMINATE".to_string();
        }
        let updates: serde_json::Map<String, serde_json::Value> = suggestion
            .updates
            .iter()
            .map(|(name, value)| (name.clone(), crate::json::value_to_json(value)))
            .collect();
        json!({
            "reasoning": suggestion.reasoning,
            "answer": suggestion.answer,
            "suggestion": updates,
        })
        .to_string()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(
        &self,
        messages: &[ChatMessage],
        ctx: Option<&TraceCtx<'_>>,
    ) -> Result<BackendReply, BackendError> {
        let Some(user) = messages.iter().rev().find(|m| m.role == Role::User) else {
            return Ok(BackendReply::text("TERMINATE"));
        };
        let suggestion = if let Some(view) = extract_report(&user.content) {
            let mut rng = self.rng.fetch_add(1, Ordering::Relaxed);
            match detect_env_kind(&view) {
                Some(kind) => scripted_propose(&view, ctx, kind, &mut rng)
                    .unwrap_or_else(|_| Suggestion::terminate()),
                None => Suggestion::terminate(),
            }
        } else {
            // Memory-only prompt: the bit-matching strategy is the only one
            // that works without a trace.
            let blocks = parse_memory_blocks(&user.content);
            if blocks.iter().any(|(_, fb)| fb.contains("check")) {
                opro_binmatch_propose(&blocks)
            } else {
                Suggestion::terminate()
            }
        };
        Ok(BackendReply::text(Self::suggestion_to_text(&suggestion)))
    }
}

/// Pulls the report section out of a user prompt built by
/// [`crate::prompts::build_prompts`].
fn extract_report(user_prompt: &str) -> Option<ReportView> {
    let fence = crate::prompts::REPORT_FENCE;
    let start = user_prompt.find(fence)? + fence.len();
    let end = user_prompt[start..].find(fence)? + start;
    ReportView::parse(user_prompt[start..end].trim_matches('\n'))
}

/// Serves pre-recorded responses in order; repeats the last one when
/// exhausted. Lets optimizer tests replay captured HTTP traffic.
pub struct ReplayBackend {
    responses: Vec<String>,
    cursor: AtomicUsize,
}

impl ReplayBackend {
    pub fn new(responses: Vec<String>) -> Self {
        ReplayBackend {
            responses,
            cursor: AtomicUsize::new(0),
        }
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(
        &self,
        _messages: &[ChatMessage],
        _ctx: Option<&TraceCtx<'_>>,
    ) -> Result<BackendReply, BackendError> {
        let i = self.cursor.fetch_add(1, Ordering::Relaxed);
        let content = self
            .responses
            .get(i)
            .or_else(|| self.responses.last())
            .cloned()
            .unwrap_or_else(|| "TERMINATE".to_string());
        Ok(BackendReply::text(content))
    }
}
