//! Canned-response backend driving the bundled replay fixtures and tests.
//!
//! Each session is a queue of pre-authored assistant turns. Tool calls in the
//! scripted turns are dispatched against the real tool handlers, so every
//! artifact downstream of the language model is produced by production code.

use std::collections::HashMap;
use std::sync::Mutex;

use super::gateway::{BackendResponse, ChatBackend, GatewayError};
use super::types::{Message, ModelConfig, Role, ToolSchema};

/// Synthetic token counts: proportional to content size so usage totals are
/// non-trivial and deterministic.
fn synthetic_tokens(messages: &[Message], response: &Message) -> (u64, u64) {
    let input: usize = messages.iter().map(|m| m.content.len()).sum();
    let output = response.content.len()
        + response.tool_calls.iter().map(|c| c.name.len() + c.arguments.to_string().len()).sum::<usize>();
    ((input / 4).max(1) as u64, (output / 4).max(1) as u64)
}

#[derive(Default)]
pub struct ScriptedBackend {
    sessions: Mutex<HashMap<String, Vec<Message>>>,
    exhausted_reply: String,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        ScriptedBackend {
            sessions: Mutex::new(HashMap::new()),
            exhausted_reply: "Analysis complete.".to_string(),
        }
    }

    /// Queue the assistant turns served for `session`, in order.
    pub fn with_session(self, session: impl Into<String>, mut turns: Vec<Message>) -> Self {
        for t in &turns {
            assert_eq!(t.role, Role::Assistant, "scripted turns must be assistant messages");
        }
        turns.reverse(); // pop from the back
        self.sessions.lock().unwrap().insert(session.into(), turns);
        self
    }

    /// Text returned once a session's script runs out (ends loops naturally).
    pub fn with_exhausted_reply(mut self, text: impl Into<String>) -> Self {
        self.exhausted_reply = text.into();
        self
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(
        &self,
        session: &str,
        _config: &ModelConfig,
        messages: &[Message],
        _tools: &[ToolSchema],
    ) -> Result<BackendResponse, GatewayError> {
        let mut sessions = self.sessions.lock().unwrap();
        let response = sessions
            .get_mut(session)
            .and_then(|turns| turns.pop())
            .unwrap_or_else(|| Message::assistant(self.exhausted_reply.clone()));
        let (input_tokens, output_tokens) = synthetic_tokens(messages, &response);
        Ok(BackendResponse { message: response, input_tokens, output_tokens })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::types::ToolCall;

    #[test]
    fn serves_turns_in_order_then_falls_back() {
        let backend = ScriptedBackend::new().with_session(
            "s",
            vec![
                Message::assistant_with_calls("", vec![ToolCall::new("1", "t", serde_json::json!({}))]),
                Message::assistant("done"),
            ],
        );
        let cfg = ModelConfig::new("m", 0.0);
        let seed = [Message::system("sys")];
        let first = backend.complete("s", &cfg, &seed, &[]).unwrap();
        assert_eq!(first.message.tool_calls.len(), 1);
        let second = backend.complete("s", &cfg, &seed, &[]).unwrap();
        assert_eq!(second.message.content, "done");
        let third = backend.complete("s", &cfg, &seed, &[]).unwrap();
        assert_eq!(third.message.content, "Analysis complete.");
    }
}
