//! CodeQL integration: database creation, query execution to SARIF, the
//! parameterized flow probe, SARIF parsing, and a fixture backend for
//! environments without the CLI installed.

pub mod backend;
pub mod bridge;
pub mod record;
pub mod sarif;

pub use backend::{
    query_digest, CliBackend, CodeqlBackend, CodeqlError, CompileOutcome, FixtureBackend,
    RunOutcome, TraceOutcome,
};
pub use bridge::{CodeqlBridge, QueryParams};
pub use record::{valid_cwe_id, OutcomeCounts, QReport, QueryOutcome, QueryRecord};
pub use sarif::{parse_sarif, to_sarif_bytes, CodeFlow, FlowStep, Location, RawResult, SarifError};
