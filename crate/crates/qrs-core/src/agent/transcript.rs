//! Newline-delimited transcript logs, one file per agent session.
//!
//! Records carry a scan-wide sequence number so cross-session ordering (for
//! example "no CVE search before the sanitize phase") stays checkable after
//! the fact.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::llm::{Message, Role};

use super::spec::AgentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Q,
    QFixup,
    R,
    S,
    Pipeline,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub seq: u64,
    pub session: String,
    pub phase: Phase,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub content_digest: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tool_name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
    pub elapsed_ms: u64,
}

/// Scan-wide log root: hands out per-session writers sharing one sequence.
pub struct ScanLog {
    dir: PathBuf,
    seq: Arc<AtomicU64>,
    started: Instant,
}

impl ScanLog {
    pub fn new(report_dir: &Path) -> Result<Self, AgentError> {
        let dir = report_dir.join("transcripts");
        fs::create_dir_all(&dir).map_err(|e| AgentError::Transcript(e.to_string()))?;
        Ok(ScanLog { dir, seq: Arc::new(AtomicU64::new(0)), started: Instant::now() })
    }

    pub fn session(&self, name: &str, phase: Phase) -> Result<TranscriptLogger, AgentError> {
        let path = self.dir.join(format!("{name}.ndjson"));
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| AgentError::Transcript(e.to_string()))?;
        Ok(TranscriptLogger {
            session: name.to_string(),
            phase,
            file: Mutex::new(file),
            seq: Arc::clone(&self.seq),
            started: self.started,
        })
    }

    /// Record a pipeline lifecycle event (stage transitions, artifact writes).
    pub fn event(&self, name: &str) -> Result<(), AgentError> {
        self.session("pipeline", Phase::Pipeline)?.log_event(name)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

pub struct TranscriptLogger {
    session: String,
    phase: Phase,
    file: Mutex<File>,
    seq: Arc<AtomicU64>,
    started: Instant,
}

fn digest(content: &str) -> String {
    hex::encode(Sha256::digest(content.as_bytes()))
}

impl TranscriptLogger {
    fn write(&self, record: &TranscriptRecord) -> Result<(), AgentError> {
        let mut line =
            serde_json::to_string(record).map_err(|e| AgentError::Transcript(e.to_string()))?;
        line.push('\n');
        let mut file = self.file.lock().unwrap();
        file.write_all(line.as_bytes()).map_err(|e| AgentError::Transcript(e.to_string()))
    }

    fn next(&self) -> (u64, u64) {
        (self.seq.fetch_add(1, Ordering::SeqCst), self.started.elapsed().as_millis() as u64)
    }

    pub fn log_message(&self, message: &Message) -> Result<(), AgentError> {
        let (seq, elapsed_ms) = self.next();
        let base = TranscriptRecord {
            seq,
            session: self.session.clone(),
            phase: self.phase,
            role: Some(message.role),
            content_digest: Some(digest(&message.content)),
            tool_name: None,
            tool_call_id: message.tool_call_id.clone(),
            event: None,
            elapsed_ms,
        };
        if message.tool_calls.is_empty() {
            return self.write(&base);
        }
        // One record per requested call, so per-tool counts stay recoverable
        // from the transcript alone.
        for call in &message.tool_calls {
            let mut rec = base.clone();
            let (seq, elapsed_ms) = self.next();
            rec.seq = seq;
            rec.elapsed_ms = elapsed_ms;
            rec.tool_name = Some(call.name.clone());
            rec.tool_call_id = Some(call.id.clone());
            self.write(&rec)?;
        }
        Ok(())
    }

    pub fn log_event(&self, event: &str) -> Result<(), AgentError> {
        let (seq, elapsed_ms) = self.next();
        self.write(&TranscriptRecord {
            seq,
            session: self.session.clone(),
            phase: self.phase,
            role: None,
            content_digest: None,
            tool_name: None,
            tool_call_id: None,
            event: Some(event.to_string()),
            elapsed_ms,
        })
    }
}

/// Read back every record under a scan's transcript directory, ordered by seq.
pub fn read_transcripts(report_dir: &Path) -> Result<Vec<TranscriptRecord>, AgentError> {
    let dir = report_dir.join("transcripts");
    let mut records = Vec::new();
    if !dir.exists() {
        return Ok(records);
    }
    let mut entries: Vec<_> = fs::read_dir(&dir)
        .map_err(|e| AgentError::Transcript(e.to_string()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "ndjson"))
        .collect();
    entries.sort();
    for path in entries {
        let text = fs::read_to_string(&path).map_err(|e| AgentError::Transcript(e.to_string()))?;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let rec: TranscriptRecord = serde_json::from_str(line)
                .map_err(|e| AgentError::Transcript(format!("{}: {e}", path.display())))?;
            records.push(rec);
        }
    }
    records.sort_by_key(|r| r.seq);
    Ok(records)
}
