//! The memory-only baseline optimizer: no execution trace, no report —
//! just past parameter/feedback pairs, one candidate per call.

use opto_core::{Graph, NodeId};

use crate::llmclient::{ChatBackend, ChatMessage};
use crate::memory::{snapshot_params, Memory, MemoryEntry};
use crate::optoprime::OptimError;
use crate::prompts::{opro_build_prompt, token_estimate, OPRO_INSTRUCTION};
use crate::record::StepRecord;
use crate::suggestion::{apply_suggestion, parse_response};

pub struct Opro<B: ChatBackend> {
    pub backend: B,
    pub memory: Memory,
    pub instruction: String,
}

impl<B: ChatBackend> Opro<B> {
    pub fn new(backend: B) -> Self {
        Opro {
            backend,
            memory: Memory::default(),
            instruction: OPRO_INSTRUCTION.to_string(),
        }
    }

    pub fn with_memory_capacity(mut self, capacity: usize) -> Self {
        self.memory = Memory::new(capacity);
        self
    }

    /// One step: record the latest (parameters, feedback) pair, prompt with
    /// the accumulated history only, apply whatever parses.
    pub fn step(
        &mut self,
        graph: &mut Graph,
        params: &[NodeId],
        feedback: &str,
    ) -> Result<StepRecord, OptimError> {
        self.memory.push(MemoryEntry {
            variables: snapshot_params(graph, params),
            feedback: feedback.to_string(),
        });
        let prompt = opro_build_prompt(&self.memory, &self.instruction);
        let messages = [ChatMessage::user(prompt.clone())];
        let reply = self.backend.complete(&messages, None)?;

        let mut record = StepRecord {
            prompt_tokens_estimate: token_estimate(&prompt),
            response_tokens_estimate: token_estimate(&reply.content),
            prompt_tokens: reply.prompt_tokens,
            completion_tokens: reply.completion_tokens,
            user_prompt: prompt,
            response: reply.content.clone(),
            ..Default::default()
        };
        match parse_response(&reply.content) {
            Ok(suggestion) if suggestion.terminate => {
                record.terminated = true;
                record.suggestion = Some(suggestion);
            }
            Ok(suggestion) => {
                record.apply = apply_suggestion(graph, &suggestion, params);
                record.suggestion = Some(suggestion);
            }
            Err(unparseable) => {
                record.skipped = Some(unparseable.to_string());
            }
        }
        Ok(record)
    }
}
