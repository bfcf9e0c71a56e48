//! The generative optimizer: renders the minimal subgraph as a problem
//! report, asks a backend for parameter updates in a single call per step,
//! applies what parses, and clears feedback.

use thiserror::Error;

use opto_core::propagate::{backward, try_gradients, MinimalSubgraphPropagator, PropagateError};
use opto_core::report::{build_report, classify, ReportError};
use opto_core::{Graph, GraphError, NodeId, NodeSet};

use crate::llmclient::{BackendError, ChatBackend, ChatMessage, TraceCtx};
use crate::memory::{snapshot_params, Memory, MemoryEntry};
use crate::prompts::{build_prompts, token_estimate, DEFAULT_INSTRUCTION};
use crate::record::StepRecord;
use crate::suggestion::{apply_suggestion, parse_response};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OptimError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(BackendError),
    #[error(transparent)]
    Propagate(PropagateError),
    #[error(transparent)]
    Report(ReportError),
    #[error(transparent)]
    Graph(GraphError),
}

impl From<BackendError> for OptimError {
    fn from(e: BackendError) -> Self {
        OptimError::BackendUnavailable(e)
    }
}

impl From<PropagateError> for OptimError {
    fn from(e: PropagateError) -> Self {
        OptimError::Propagate(e)
    }
}

impl From<ReportError> for OptimError {
    fn from(e: ReportError) -> Self {
        OptimError::Report(e)
    }
}

/// One-call-per-step generative optimizer over trace feedback.
pub struct OptoPrime<B: ChatBackend> {
    pub backend: B,
    pub memory: Option<Memory>,
    pub instruction: String,
    /// Ablation switch: blank the trace sections (#Code, #Documentation,
    /// #Others) and withhold the trace context from the backend.
    pub mask_trace: bool,
    /// Rejections from the previous step, appended to the next feedback.
    pending_rejection: Option<String>,
}

impl<B: ChatBackend> OptoPrime<B> {
    pub fn new(backend: B) -> Self {
        OptoPrime {
            backend,
            memory: None,
            instruction: DEFAULT_INSTRUCTION.to_string(),
            mask_trace: false,
            pending_rejection: None,
        }
    }

    pub fn with_memory(mut self, capacity: usize) -> Self {
        self.memory = Some(Memory::new(capacity));
        self
    }

    pub fn with_instruction(mut self, instruction: &str) -> Self {
        self.instruction = instruction.to_string();
        self
    }

    pub fn masked(mut self) -> Self {
        self.mask_trace = true;
        self
    }

    /// One optimization step: backward pass, report, a single backend
    /// call, parse, apply, memory append, feedback reset.
    ///
    /// Unparseable responses and TERMINATE are not errors; the step is
    /// recorded as a no-op and every parameter keeps its value.
    pub fn step(
        &mut self,
        graph: &mut Graph,
        params: &[NodeId],
        output: NodeId,
        feedback: &str,
    ) -> Result<StepRecord, OptimError> {
        let feedback = match self.pending_rejection.take() {
            Some(rejection) => format!("{feedback}\nPrevious suggestion: {rejection}."),
            None => feedback.to_string(),
        };

        // Gradients are computed on a scratch clone before feedback lands.
        let gradients = if self.mask_trace {
            None
        } else {
            try_gradients(graph, output)
        };

        let run = backward(graph, output, &feedback, &MinimalSubgraphPropagator)?;
        let mut subgraph = NodeSet::new();
        let mut reached: Vec<NodeId> = Vec::new();
        let mut unreachable_params = Vec::new();
        for &param in params {
            match run.subgraph_at(param) {
                Some(tf) => {
                    subgraph = subgraph.union(&tf.nodes);
                    reached.push(param);
                }
                None => {
                    let name = graph.node(param).map_err(OptimError::Graph)?.name.clone();
                    unreachable_params.push(name);
                }
            }
        }

        if reached.is_empty() {
            graph.zero_feedback(params);
            return Ok(StepRecord {
                terminated: true,
                skipped: Some("no trainable parameters reachable from output".to_string()),
                unreachable_params,
                ..Default::default()
            });
        }

        let roles = classify(graph, &subgraph, &reached, output)?;
        let mut report = build_report(graph, &subgraph, &roles, &self.instruction, &feedback);
        if self.mask_trace {
            report.code_lines.clear();
            report.documentation.clear();
            report.others.clear();
        }
        let report_text = report.render();
        let (system_prompt, user_prompt) =
            build_prompts(&report_text, self.memory.as_ref().filter(|m| !m.is_empty()));

        let messages = [
            ChatMessage::system(system_prompt.clone()),
            ChatMessage::user(user_prompt.clone()),
        ];
        let ctx = TraceCtx {
            graph,
            params: &reached,
            output,
            subgraph: &subgraph,
            gradients: gradients.as_ref(),
        };
        let reply = self
            .backend
            .complete(&messages, if self.mask_trace { None } else { Some(&ctx) })?;

        // Memory holds the pre-update parameter snapshot with the feedback
        // it earned.
        let snapshot = snapshot_params(graph, params);
        if let Some(memory) = &mut self.memory {
            memory.push(MemoryEntry {
                variables: snapshot,
                feedback: feedback.clone(),
            });
        }

        let mut record = StepRecord {
            prompt_tokens_estimate: token_estimate(&system_prompt) + token_estimate(&user_prompt),
            response_tokens_estimate: token_estimate(&reply.content),
            prompt_tokens: reply.prompt_tokens,
            completion_tokens: reply.completion_tokens,
            system_prompt,
            user_prompt,
            response: reply.content.clone(),
            unreachable_params,
            ..Default::default()
        };
        match parse_response(&reply.content) {
            Ok(suggestion) if suggestion.terminate => {
                record.terminated = true;
                record.suggestion = Some(suggestion);
            }
            Ok(suggestion) => {
                let apply = apply_suggestion(graph, &suggestion, params);
                self.pending_rejection = apply.rejection_summary();
                record.suggestion = Some(suggestion);
                record.apply = apply;
            }
            Err(unparseable) => {
                record.skipped = Some(unparseable.to_string());
            }
        }
        graph.zero_feedback(params);
        Ok(record)
    }
}
