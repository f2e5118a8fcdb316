//! qrs: a three-agent scanning pipeline around a CodeQL backend.
//!
//! A scan extracts an archived source package, profiles it, synthesizes and
//! self-heals static-analysis queries (Q), semantically reviews raw results
//! into evidence-backed findings with exploit payloads (R), and arbitrates
//! each finding in a clean context with flag taxonomy labels (S). Every stage
//! runs against a swappable model transport (live, record, replay) and a
//! swappable CodeQL backend (CLI or fixture), so whole scans replay
//! deterministically offline.

pub mod agent;
pub mod codeql;
pub mod fixtures;
pub mod ingest;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod qagent;
pub mod ragent;
pub mod sagent;
pub mod severity;

pub use severity::Severity;
