//! Orchestration over a CodeQL backend: query files on disk, SARIF artifacts,
//! outcome classification, and the parameterized flow probe.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::ingest::safe_join;
use crate::severity::Severity;

use super::backend::{CodeqlBackend, CodeqlError, CompileOutcome, RunOutcome, TraceOutcome};
use super::record::{QueryOutcome, QueryRecord};
use super::sarif::{parse_sarif, FlowStep, Location, RawResult};

pub struct QueryParams {
    pub query_id: String,
    pub hypothesis: String,
    pub severity: Severity,
    pub cwe_ids: Vec<String>,
    pub query_text: String,
    pub predecessor_id: Option<String>,
}

pub struct CodeqlBridge {
    backend: Arc<dyn CodeqlBackend>,
    /// Query files and SARIF artifacts land here, named by query id, and are
    /// retained for provenance.
    report_dir: PathBuf,
}

impl CodeqlBridge {
    pub fn new(backend: Arc<dyn CodeqlBackend>, report_dir: impl Into<PathBuf>) -> Self {
        CodeqlBridge { backend, report_dir: report_dir.into() }
    }

    pub fn report_dir(&self) -> &Path {
        &self.report_dir
    }

    /// Create the analysis database under `databases/<package>-db`.
    pub fn create_database(
        &self,
        workspace: &Path,
        language: &str,
        databases_root: &Path,
        package: &str,
    ) -> Result<PathBuf, CodeqlError> {
        if !workspace.is_dir() {
            return Err(CodeqlError::WorkspaceNotFound(workspace.to_path_buf()));
        }
        let db_dir = databases_root.join(format!("{package}-db"));
        fs::create_dir_all(databases_root)?;
        self.backend.create_database(workspace, language, &db_dir)?;
        Ok(db_dir)
    }

    pub fn compile_query(&self, query_text: &str) -> Result<CompileOutcome, CodeqlError> {
        fs::create_dir_all(&self.report_dir)?;
        let query_path = self.report_dir.join(format!("compile_{}.ql", uuid::Uuid::new_v4()));
        fs::write(&query_path, query_text)?;
        let outcome = self.backend.compile_query(&query_path, query_text);
        let _ = fs::remove_file(&query_path);
        outcome
    }

    /// Execute a query and classify the outcome. All failure modes, including
    /// backend errors and unparseable output, become `outcome = failed` with
    /// captured diagnostics; nothing escapes.
    pub fn run_query(&self, db_dir: &Path, params: QueryParams) -> QueryRecord {
        let mut record = QueryRecord {
            query_id: params.query_id.clone(),
            hypothesis: params.hypothesis,
            severity: params.severity,
            cwe_ids: params.cwe_ids,
            query_text: params.query_text.clone(),
            outcome: QueryOutcome::Failed,
            result_count: 0,
            diagnostics: None,
            sarif_path: None,
            predecessor_id: params.predecessor_id,
        };

        let query_path = self.report_dir.join(format!("{}.ql", params.query_id));
        let sarif_path = self.report_dir.join(format!("{}_results.sarif", params.query_id));
        if let Err(e) = fs::create_dir_all(&self.report_dir).and_then(|_| fs::write(&query_path, &params.query_text)) {
            record.diagnostics = Some(format!("failed to stage query file: {e}"));
            return record;
        }

        match self.backend.run_query(db_dir, &query_path, &params.query_text, &sarif_path) {
            Ok(RunOutcome::Sarif(bytes)) => match parse_sarif(&bytes) {
                Ok(results) => {
                    record.result_count = results.len() as u64;
                    record.outcome = if results.is_empty() {
                        QueryOutcome::SucceededEmpty
                    } else {
                        QueryOutcome::SucceededWithResults
                    };
                    record.sarif_path = Some(sarif_path.to_string_lossy().into_owned());
                }
                Err(e) => {
                    record.diagnostics = Some(format!("analysis output was not valid SARIF: {e}"));
                }
            },
            Ok(RunOutcome::Failure(diagnostics)) => {
                record.diagnostics = Some(diagnostics);
            }
            Err(e) => {
                record.diagnostics = Some(e.to_string());
            }
        }
        debug_assert!(record.check_invariants().is_ok(), "{:?}", record.check_invariants());
        record
    }

    /// Load the parsed results behind a record, if it succeeded.
    pub fn load_results(&self, record: &QueryRecord) -> Result<Vec<RawResult>, CodeqlError> {
        let Some(path) = &record.sarif_path else {
            return Ok(Vec::new());
        };
        let bytes = fs::read(path)?;
        parse_sarif(&bytes).map_err(|e| CodeqlError::DatabaseCreation(e.to_string()))
    }

    /// Probe for a data-flow path between two in-workspace locations.
    ///
    /// Reflexive by construction: identical source and sink short-circuit to a
    /// single-step flow without consulting the backend.
    pub fn trace_flow(
        &self,
        db_dir: &Path,
        workspace: &Path,
        source: &Location,
        sink: &Location,
        tolerance: u8,
    ) -> Result<TraceOutcome, CodeqlError> {
        if !(1..=3).contains(&tolerance) {
            return Err(CodeqlError::InvalidTolerance(tolerance));
        }
        for loc in [source, sink] {
            let joined = safe_join(workspace, &loc.uri)
                .map_err(|_| CodeqlError::LocationOutsideWorkspace(loc.uri.clone()))?;
            if !joined.is_file() {
                return Err(CodeqlError::LocationOutsideWorkspace(loc.uri.clone()));
            }
        }
        if source == sink {
            return Ok(TraceOutcome::Flow(vec![FlowStep {
                location: source.clone(),
                message: Some("source and sink coincide".into()),
            }]));
        }
        let scratch = self.report_dir.join("traceflow");
        self.backend.trace_flow(db_dir, source, sink, tolerance, &scratch)
    }
}
