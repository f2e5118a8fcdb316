//! Budgeted agentic loop shared by the query, review and sanitize agents.

pub mod runner;
pub mod spec;
pub mod transcript;

pub use runner::{
    dispatch_tool_calls, run_loop, LoopState, RunLoopOptions, ToolDispatcher, ToolOutcome,
    DEFAULT_TOOL_RESULT_CAP, FINAL_ITERATION_WARNING,
};
pub use spec::{assemble_system_prompt, AgentError, AgentName, AgentSpec, PromptSection};
pub use transcript::{read_transcripts, Phase, ScanLog, TranscriptLogger, TranscriptRecord};
