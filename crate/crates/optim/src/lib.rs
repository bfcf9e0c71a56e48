//! Optimizers over trace feedback and the chat-completion backends they
//! talk to: a generative optimizer that sends the rendered problem report
//! to a language model in one call per step, a memory-only baseline, a
//! deterministic scripted proposer for reproducible runs, and Adam over
//! gradient feedback.

pub mod adam;
pub mod json;
pub mod llmclient;
pub mod memory;
pub mod opro;
pub mod optoprime;
pub mod prompts;
pub mod record;
pub mod scripted;
pub mod suggestion;

pub use adam::{adam_step, AdamError, AdamState};
pub use llmclient::{
    complete, ApiKey, BackendConfig, BackendError, BackendReply, ChatBackend, ChatMessage,
    HttpBackend, ReplayBackend, Role, ScriptedBackend, TraceCtx,
};
pub use memory::{snapshot_params, Memory, MemoryEntry, DEFAULT_MEMORY_CAPACITY};
pub use opro::Opro;
pub use optoprime::{OptimError, OptoPrime};
pub use prompts::{
    build_prompts, opro_build_prompt, system_prompt, token_estimate, DEFAULT_INSTRUCTION,
    OPRO_INSTRUCTION, OUTPUT_FORMAT_PROMPT, REPRESENTATION_PROMPT,
};
pub use record::StepRecord;
pub use scripted::{
    detect_env_kind, scripted_propose, EnvKind, ReportView, UnrecognizedFeedback,
    BATTLESHIP_HEURISTICS, SCRIPTED_STEP_SIZE,
};
pub use suggestion::{apply_suggestion, parse_response, ApplyResult, RejectReason, Suggestion, Unparseable};
