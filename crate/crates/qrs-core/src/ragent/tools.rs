//! Sandboxed code-inspection tools: bounded snippet extraction and a
//! pattern-enabled grep restricted to the scan workspace.
//!
//! Both tools resolve symlinks before the workspace-prefix check, so neither
//! can be steered outside the extracted package.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::ingest::safe_join;

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("sandbox error: path '{0}' escapes the workspace")]
    PathEscape(String),
    #[error("path '{0}' not found in the workspace")]
    NotFound(String),
    #[error("invalid line range: {0}")]
    InvalidRange(String),
    #[error("span of {got} lines exceeds the {cap}-line cap")]
    SpanOverCap { got: u64, cap: u64 },
    #[error("invalid pattern: {0}")]
    InvalidPattern(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub const DEFAULT_SNIPPET_LINE_CAP: u64 = 200;
const GREP_MATCH_CAP: usize = 200;

/// Resolve a workspace-relative path and verify, post-canonicalization, that
/// it still sits under the workspace root.
fn resolve_sandboxed(workspace: &Path, relative: &str) -> Result<PathBuf, SandboxError> {
    let joined =
        safe_join(workspace, relative).map_err(|_| SandboxError::PathEscape(relative.to_string()))?;
    if !joined.exists() {
        return Err(SandboxError::NotFound(relative.to_string()));
    }
    let canonical_root =
        workspace.canonicalize().map_err(|_| SandboxError::NotFound(workspace.display().to_string()))?;
    let canonical = joined.canonicalize().map_err(|_| SandboxError::NotFound(relative.to_string()))?;
    if !canonical.starts_with(&canonical_root) {
        return Err(SandboxError::PathEscape(relative.to_string()));
    }
    Ok(canonical)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snippet {
    pub file_path: String,
    pub start_line: u64,
    pub end_line: u64,
    /// Lines rendered with 1-based line-number annotations.
    pub content: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Extract exact lines `[start_line, end_line]` with line-number annotations.
///
/// Spans past the end of the file clamp with a note; spans over the cap are
/// rejected outright.
pub fn extract_code_snippet(
    workspace: &Path,
    file_path: &str,
    start_line: u64,
    end_line: u64,
    line_cap: u64,
) -> Result<Snippet, SandboxError> {
    if start_line < 1 || end_line < start_line {
        return Err(SandboxError::InvalidRange(format!(
            "need 1 <= start_line <= end_line, got {start_line}..{end_line}"
        )));
    }
    let span = end_line - start_line + 1;
    if span > line_cap {
        return Err(SandboxError::SpanOverCap { got: span, cap: line_cap });
    }
    let path = resolve_sandboxed(workspace, file_path)?;
    if !path.is_file() {
        return Err(SandboxError::NotFound(file_path.to_string()));
    }
    let text = String::from_utf8_lossy(&fs::read(&path)?).into_owned();
    let lines: Vec<&str> = text.lines().collect();
    let total = lines.len() as u64;
    if start_line > total {
        return Err(SandboxError::InvalidRange(format!(
            "start_line {start_line} is past the end of the file ({total} lines)"
        )));
    }
    let clamped_end = end_line.min(total);
    let mut content = String::new();
    for (offset, line) in lines[(start_line - 1) as usize..clamped_end as usize].iter().enumerate() {
        content.push_str(&format!("{:>5} | {}\n", start_line + offset as u64, line));
    }
    let note = (clamped_end < end_line)
        .then(|| format!("requested range extends past end of file ({total} lines); clamped"));
    Ok(Snippet { file_path: file_path.to_string(), start_line, end_line: clamped_end, content, note })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrepMatch {
    pub file: String,
    pub line: u64,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrepOutput {
    pub matches: Vec<GrepMatch>,
    pub total: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Regex search under a restricted workspace path.
///
/// Symlinked files and directories are skipped rather than followed; every
/// opened file re-verifies the canonical prefix.
pub fn grep_search(workspace: &Path, pattern: &str, scope_path: &str) -> Result<GrepOutput, SandboxError> {
    let regex = regex::Regex::new(pattern).map_err(|e| SandboxError::InvalidPattern(e.to_string()))?;
    let scope = if scope_path.is_empty() || scope_path == "." {
        resolve_sandboxed(workspace, ".")?
    } else {
        resolve_sandboxed(workspace, scope_path)?
    };
    let canonical_root = workspace
        .canonicalize()
        .map_err(|_| SandboxError::NotFound(workspace.display().to_string()))?;

    let mut files: Vec<PathBuf> = Vec::new();
    if scope.is_file() {
        files.push(scope.clone());
    } else {
        for entry in walkdir::WalkDir::new(&scope).follow_links(false).sort_by_file_name() {
            let entry = match entry {
                Ok(e) => e,
                Err(_) => continue,
            };
            if entry.path_is_symlink() || !entry.file_type().is_file() {
                continue;
            }
            files.push(entry.into_path());
        }
    }

    let mut matches = Vec::new();
    let mut total = 0u64;
    for path in files {
        let Ok(canonical) = path.canonicalize() else { continue };
        if !canonical.starts_with(&canonical_root) {
            continue;
        }
        let Ok(bytes) = fs::read(&canonical) else { continue };
        let text = String::from_utf8_lossy(&bytes);
        let rel = canonical
            .strip_prefix(&canonical_root)
            .unwrap_or(&canonical)
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        for (index, line) in text.lines().enumerate() {
            if regex.is_match(line) {
                total += 1;
                if matches.len() < GREP_MATCH_CAP {
                    matches.push(GrepMatch {
                        file: rel.clone(),
                        line: index as u64 + 1,
                        content: line.to_string(),
                    });
                }
            }
        }
    }
    let note =
        (total > matches.len() as u64).then(|| format!("showing first {GREP_MATCH_CAP} matches"));
    Ok(GrepOutput { matches, total, note })
}
