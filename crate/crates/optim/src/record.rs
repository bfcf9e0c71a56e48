//! Per-step experiment records, serialized as JSON lines.

use serde_json::json;

use crate::json::value_to_json;
use crate::suggestion::{ApplyResult, Suggestion};

/// Everything one optimization step saw and did. Serializes to one JSON
/// line; never contains credentials.
#[derive(Debug, Clone, Default)]
pub struct StepRecord {
    pub iteration: u64,
    pub seed: u64,
    pub system_prompt: String,
    pub user_prompt: String,
    pub response: String,
    pub suggestion: Option<Suggestion>,
    pub apply: ApplyResult,
    pub terminated: bool,
    /// Set when the response was unparseable and the step became a no-op.
    pub skipped: Option<String>,
    /// Trainable parameters the backward pass did not reach.
    pub unreachable_params: Vec<String>,
    /// Whitespace-token estimates, always available.
    pub prompt_tokens_estimate: usize,
    pub response_tokens_estimate: usize,
    /// Server-reported usage, when the backend provides it.
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    /// Task metric for this iteration, filled in by the demo driver.
    pub metric: Option<f64>,
}

impl StepRecord {
    pub fn to_json(&self) -> serde_json::Value {
        let suggestion = self.suggestion.as_ref().map(|s| {
            json!({
                "reasoning": s.reasoning,
                "answer": s.answer,
                "updates": s
                    .updates
                    .iter()
                    .map(|(k, v)| (k.clone(), value_to_json(v)))
                    .collect::<serde_json::Map<_, _>>(),
                "terminate": s.terminate,
            })
        });
        json!({
            "iteration": self.iteration,
            "seed": self.seed,
            "system_prompt": self.system_prompt,
            "user_prompt": self.user_prompt,
            "response": self.response,
            "suggestion": suggestion,
            "applied": self.apply.applied,
            "rejected": self
                .apply
                .rejected
                .iter()
                .map(|(name, reason)| json!({ "name": name, "reason": reason.to_string() }))
                .collect::<Vec<_>>(),
            "terminated": self.terminated,
            "skipped": self.skipped,
            "unreachable_params": self.unreachable_params,
            "prompt_tokens_estimate": self.prompt_tokens_estimate,
            "response_tokens_estimate": self.response_tokens_estimate,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "metric": self.metric,
        })
    }

    pub fn to_json_line(&self) -> String {
        self.to_json().to_string()
    }
}
