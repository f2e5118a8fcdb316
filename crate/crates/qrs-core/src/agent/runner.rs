//! Generic budgeted agentic loop.
//!
//! One iteration = one model turn. A batch of parallel tool calls inside a
//! single assistant turn consumes exactly one iteration, which is why
//! tool-call totals can exceed the iteration budget. On the final permitted
//! iteration a warning is injected (as a user message, without consuming an
//! iteration) demanding finalization.

use std::collections::BTreeMap;
use std::collections::HashSet;

use crate::llm::{Gateway, Message, ModelConfig, ToolCall, Usage, UsageEntry};

use super::spec::{assemble_system_prompt, AgentError, AgentSpec};
use super::transcript::TranscriptLogger;

pub const FINAL_ITERATION_WARNING: &str =
    "CRITICAL: This is your FINAL iteration. You MUST submit all pending assessments.";

/// Default byte cap applied to a single tool result before truncation.
pub const DEFAULT_TOOL_RESULT_CAP: usize = 64 * 1024;

/// What one dispatched tool call produced. Failures are reified into the
/// payload by the dispatcher; they never abort the loop.
pub struct ToolOutcome {
    pub payload: String,
    /// True when this tool ends the session (for example `create_report`).
    pub finalize: bool,
}

impl ToolOutcome {
    pub fn reply(payload: impl Into<String>) -> Self {
        ToolOutcome { payload: payload.into(), finalize: false }
    }

    pub fn finalizing(payload: impl Into<String>) -> Self {
        ToolOutcome { payload: payload.into(), finalize: true }
    }

    pub fn error(detail: impl std::fmt::Display) -> Self {
        ToolOutcome::reply(
            serde_json::json!({ "success": false, "error": detail.to_string() }).to_string(),
        )
    }
}

pub trait ToolDispatcher {
    fn dispatch(&mut self, call: &ToolCall) -> ToolOutcome;
}

#[derive(Debug, Clone, Default)]
pub struct LoopState {
    /// Model turns taken; never exceeds the budget.
    pub iteration: u32,
    pub max_iterations: u32,
    pub tool_call_counts: BTreeMap<String, u64>,
    pub transcript: Vec<Message>,
    pub usage: Vec<UsageEntry>,
    pub total_usage: Usage,
    /// Loop ended because the budget ran out while the agent was still
    /// calling tools (and no finalizing tool was seen).
    pub budget_exhausted: bool,
    /// A finalizing tool call ended the session.
    pub finalized: bool,
    pub warning_injected: bool,
}

impl LoopState {
    pub fn remaining(&self) -> u32 {
        self.max_iterations.saturating_sub(self.iteration)
    }

    pub fn total_tool_calls(&self) -> u64 {
        self.tool_call_counts.values().sum()
    }
}

pub struct RunLoopOptions {
    pub tool_result_byte_cap: usize,
}

impl Default for RunLoopOptions {
    fn default() -> Self {
        RunLoopOptions { tool_result_byte_cap: DEFAULT_TOOL_RESULT_CAP }
    }
}

fn truncate_payload(payload: String, cap: usize) -> String {
    if payload.len() <= cap {
        return payload;
    }
    let mut cut = cap;
    while cut > 0 && !payload.is_char_boundary(cut) {
        cut -= 1;
    }
    format!("{}\n[truncated: tool result exceeded {} bytes]", &payload[..cut], cap)
}

/// Execute one batch of tool calls, in batch order, one tool message per call.
///
/// Unknown tool names and dispatcher failures become error payloads; nothing
/// here aborts the loop. Duplicate call ids within a batch are a provider
/// contract violation and surface as an error.
pub fn dispatch_tool_calls(
    batch: &[ToolCall],
    dispatcher: &mut dyn ToolDispatcher,
    registered: &[&str],
    cap: usize,
) -> Result<(Vec<Message>, bool), AgentError> {
    let mut seen = HashSet::new();
    for call in batch {
        if !seen.insert(call.id.as_str()) {
            return Err(AgentError::DuplicateToolCallId(call.id.clone()));
        }
    }
    let mut messages = Vec::with_capacity(batch.len());
    let mut finalize = false;
    for call in batch {
        let outcome = if registered.contains(&call.name.as_str()) {
            dispatcher.dispatch(call)
        } else {
            ToolOutcome::error(format!(
                "unknown tool '{}'; available tools: {}",
                call.name,
                registered.join(", ")
            ))
        };
        finalize |= outcome.finalize;
        messages.push(Message::tool(call.id.clone(), truncate_payload(outcome.payload, cap)));
    }
    Ok((messages, finalize))
}

/// Run a budgeted tool-calling loop to completion.
///
/// The loop ends when the agent stops calling tools, a finalizing tool runs,
/// or the iteration budget is exhausted.
pub fn run_loop(
    gateway: &Gateway,
    session: &str,
    model: &ModelConfig,
    spec: &AgentSpec,
    seed: Vec<Message>,
    dispatcher: &mut dyn ToolDispatcher,
    log: Option<&TranscriptLogger>,
    opts: &RunLoopOptions,
) -> Result<LoopState, AgentError> {
    let system = assemble_system_prompt(spec)?;
    let mut state = LoopState { max_iterations: spec.max_iterations, ..LoopState::default() };
    let mut messages = Vec::with_capacity(seed.len() + 2);
    messages.push(system);
    messages.extend(seed);
    if let Some(log) = log {
        for m in &messages {
            log.log_message(m)?;
        }
    }
    let registered = spec.tool_names();

    loop {
        let next_iteration = state.iteration + 1;
        if next_iteration == spec.max_iterations && !state.warning_injected {
            let warning = Message::user(FINAL_ITERATION_WARNING);
            if let Some(log) = log {
                log.log_message(&warning)?;
            }
            messages.push(warning);
            state.warning_injected = true;
        }

        let (assistant, usage) = gateway.complete(session, model, &messages, &spec.tools)?;
        state.iteration = next_iteration;
        state.usage.push(UsageEntry {
            model_id: model.model_id.clone(),
            input_tokens: usage.input_tokens,
            output_tokens: usage.output_tokens,
        });
        state.total_usage += usage;
        if let Some(log) = log {
            log.log_message(&assistant)?;
        }
        messages.push(assistant.clone());

        if assistant.tool_calls.is_empty() {
            break;
        }
        for call in &assistant.tool_calls {
            *state.tool_call_counts.entry(call.name.clone()).or_insert(0) += 1;
        }
        let (results, finalize) =
            dispatch_tool_calls(&assistant.tool_calls, dispatcher, &registered, opts.tool_result_byte_cap)?;
        if let Some(log) = log {
            for r in &results {
                log.log_message(r)?;
            }
        }
        messages.extend(results);

        if finalize {
            state.finalized = true;
            break;
        }
        if state.iteration == spec.max_iterations {
            state.budget_exhausted = true;
            break;
        }
    }

    state.transcript = messages;
    Ok(state)
}
