//! Deterministic record/replay backends over a turn-indexed transcript archive.
//!
//! Record mode wraps a live backend and persists `(request digest, response)`
//! pairs; replay mode serves them back in order and fails loudly when the
//! request stream diverges from the recording.
//!
//! The digest covers the system prompt, the turn index, and every tool result
//! observed so far, with whitespace runs collapsed so cosmetic reflows do not
//! invalidate an archive while content drift does.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::gateway::{BackendResponse, ChatBackend, GatewayError};
use super::types::{Message, ModelConfig, Role, ToolSchema};

#[derive(Debug, Serialize, Deserialize)]
struct TurnRecord {
    digest: String,
    response: Message,
    input_tokens: u64,
    output_tokens: u64,
}

fn collapse_ws(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_ws = false;
    for ch in text.trim().chars() {
        if ch.is_whitespace() {
            in_ws = true;
        } else {
            if in_ws {
                out.push(' ');
                in_ws = false;
            }
            out.push(ch);
        }
    }
    out
}

/// Digest over (system prompt, turn index, tool results so far).
pub fn request_digest(messages: &[Message], turn: usize) -> String {
    let mut hasher = Sha256::new();
    if let Some(system) = messages.first().filter(|m| m.role == Role::System) {
        hasher.update(collapse_ws(&system.content).as_bytes());
    }
    hasher.update([0u8]);
    hasher.update(turn.to_string().as_bytes());
    for msg in messages.iter().filter(|m| m.role == Role::Tool) {
        hasher.update([1u8]);
        hasher.update(collapse_ws(&msg.content).as_bytes());
    }
    hex::encode(hasher.finalize())
}

fn sanitize_session(session: &str) -> String {
    session
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn turn_path(root: &Path, session: &str, turn: usize) -> PathBuf {
    root.join(sanitize_session(session)).join(format!("turn_{turn:04}.json"))
}

/// Wraps an inner backend and archives every completed turn.
pub struct RecordBackend {
    inner: Arc<dyn ChatBackend>,
    root: PathBuf,
    turns: Mutex<HashMap<String, usize>>,
}

impl RecordBackend {
    pub fn new(inner: Arc<dyn ChatBackend>, root: impl Into<PathBuf>) -> Self {
        RecordBackend { inner, root: root.into(), turns: Mutex::new(HashMap::new()) }
    }
}

impl ChatBackend for RecordBackend {
    fn complete(
        &self,
        session: &str,
        config: &ModelConfig,
        messages: &[Message],
        tools: &[ToolSchema],
    ) -> Result<BackendResponse, GatewayError> {
        let response = self.inner.complete(session, config, messages, tools)?;
        let turn = {
            let mut turns = self.turns.lock().unwrap();
            let counter = turns.entry(session.to_string()).or_insert(0);
            let t = *counter;
            *counter += 1;
            t
        };
        let record = TurnRecord {
            digest: request_digest(messages, turn),
            response: response.message.clone(),
            input_tokens: response.input_tokens,
            output_tokens: response.output_tokens,
        };
        let path = turn_path(&self.root, session, turn);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| GatewayError::Archive(e.to_string()))?;
        }
        let json = serde_json::to_vec_pretty(&record).map_err(|e| GatewayError::Archive(e.to_string()))?;
        fs::write(&path, json).map_err(|e| GatewayError::Archive(e.to_string()))?;
        Ok(response)
    }
}

/// Serves archived turns in order, verifying the request digest at each one.
pub struct ReplayBackend {
    root: PathBuf,
    turns: Mutex<HashMap<String, usize>>,
}

impl ReplayBackend {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ReplayBackend { root: root.into(), turns: Mutex::new(HashMap::new()) }
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(
        &self,
        session: &str,
        _config: &ModelConfig,
        messages: &[Message],
        _tools: &[ToolSchema],
    ) -> Result<BackendResponse, GatewayError> {
        let turn = {
            let mut turns = self.turns.lock().unwrap();
            let counter = turns.entry(session.to_string()).or_insert(0);
            let t = *counter;
            *counter += 1;
            t
        };
        let path = turn_path(&self.root, session, turn);
        let bytes = fs::read(&path).map_err(|_| GatewayError::ReplayDivergence {
            session: session.to_string(),
            turn,
            detail: format!("archive has no entry at {}", path.display()),
        })?;
        let record: TurnRecord = serde_json::from_slice(&bytes)
            .map_err(|e| GatewayError::Archive(format!("{}: {e}", path.display())))?;
        let expected = request_digest(messages, turn);
        if record.digest != expected {
            return Err(GatewayError::ReplayDivergence {
                session: session.to_string(),
                turn,
                detail: format!("request digest {expected} does not match recorded {}", record.digest),
            });
        }
        Ok(BackendResponse {
            message: record.response,
            input_tokens: record.input_tokens,
            output_tokens: record.output_tokens,
        })
    }
}
