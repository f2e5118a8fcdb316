//! Swappable CodeQL execution backends: the real CLI, and a fixture backend
//! serving recorded SARIF/diagnostics keyed by query digest so full scans run
//! without CodeQL installed.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::sarif::{FlowStep, Location};

#[derive(Debug, Error)]
pub enum CodeqlError {
    #[error("codeql CLI unavailable: {0}")]
    CliUnavailable(String),
    #[error("workspace not found: {0}")]
    WorkspaceNotFound(PathBuf),
    #[error("database creation failed: {0}")]
    DatabaseCreation(String),
    #[error("tolerance {0} outside [1, 3]")]
    InvalidTolerance(u8),
    #[error("location '{0}' is outside the workspace")]
    LocationOutsideWorkspace(String),
    #[error("no fixture entry for query digest {0}")]
    MissingFixture(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompileOutcome {
    Ok,
    /// Captured compiler error stream, verbatim.
    Diagnostics(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Sarif(Vec<u8>),
    Failure(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceOutcome {
    Flow(Vec<FlowStep>),
    NoFlow,
}

pub fn query_digest(query_text: &str) -> String {
    hex::encode(Sha256::digest(query_text.as_bytes()))
}

pub trait CodeqlBackend: Send + Sync {
    fn create_database(&self, workspace: &Path, language: &str, db_dir: &Path) -> Result<(), CodeqlError>;
    fn compile_query(&self, query_path: &Path, query_text: &str) -> Result<CompileOutcome, CodeqlError>;
    fn run_query(&self, db_dir: &Path, query_path: &Path, query_text: &str, sarif_out: &Path) -> Result<RunOutcome, CodeqlError>;
    fn trace_flow(
        &self,
        db_dir: &Path,
        source: &Location,
        sink: &Location,
        tolerance: u8,
        scratch: &Path,
    ) -> Result<TraceOutcome, CodeqlError>;
}

// --- CLI backend -------------------------------------------------------------

/// Invokes the external `codeql` binary with a per-invocation wall-clock
/// timeout; a timed-out query classifies as failed, keeping loops terminating.
pub struct CliBackend {
    binary: String,
    pub query_timeout: Duration,
    pub database_timeout: Duration,
}

impl CliBackend {
    pub fn new() -> Self {
        CliBackend {
            binary: "codeql".to_string(),
            query_timeout: Duration::from_secs(120),
            database_timeout: Duration::from_secs(600),
        }
    }

    pub fn with_binary(mut self, binary: impl Into<String>) -> Self {
        self.binary = binary.into();
        self
    }

    fn run_with_timeout(&self, mut cmd: Command, timeout: Duration) -> Result<(bool, String), CodeqlError> {
        cmd.stdout(Stdio::piped()).stderr(Stdio::piped()).stdin(Stdio::null());
        log::info!("[*] Running command: {cmd:?}");
        let mut child = cmd.spawn().map_err(|e| CodeqlError::CliUnavailable(e.to_string()))?;
        let started = Instant::now();
        loop {
            match child.try_wait()? {
                Some(status) => {
                    let mut output = String::new();
                    if let Some(mut stderr) = child.stderr.take() {
                        use std::io::Read;
                        let _ = stderr.read_to_string(&mut output);
                    }
                    if let Some(mut stdout) = child.stdout.take() {
                        use std::io::Read;
                        let mut out = String::new();
                        let _ = stdout.read_to_string(&mut out);
                        if !out.trim().is_empty() {
                            output.push_str(&out);
                        }
                    }
                    return Ok((status.success(), output));
                }
                None => {
                    if started.elapsed() >= timeout {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Ok((false, format!("timed out after {}s", timeout.as_secs())));
                    }
                    std::thread::sleep(Duration::from_millis(50));
                }
            }
        }
    }
}

impl Default for CliBackend {
    fn default() -> Self {
        Self::new()
    }
}

/// Hard-coded data-flow predicate parameterized on source, sink and line
/// tolerance; the only query the pipeline ships rather than synthesizes.
const TRACE_FLOW_TEMPLATE: &str = r#"/**
 * @name Parameterized source-to-sink reachability probe
 * @kind path-problem
 * @id qrs/trace-flow
 */
import python
import semmle.python.dataflow.new.DataFlow
import semmle.python.dataflow.new.TaintTracking
import MyFlow::PathGraph

module MyConfig implements DataFlow::ConfigSig {
  predicate isSource(DataFlow::Node node) {
    node.getLocation().getFile().getRelativePath() = "{src_file}" and
    node.getLocation().getStartLine() >= {src_lo} and
    node.getLocation().getStartLine() <= {src_hi}
  }

  predicate isSink(DataFlow::Node node) {
    node.getLocation().getFile().getRelativePath() = "{sink_file}" and
    node.getLocation().getStartLine() >= {sink_lo} and
    node.getLocation().getStartLine() <= {sink_hi}
  }
}

module MyFlow = TaintTracking::Global<MyConfig>;

from MyFlow::PathNode source, MyFlow::PathNode sink
where MyFlow::flowPath(source, sink)
select sink.getNode(), source, sink, "Flow from $@ to sink.", source.getNode(), "source"
"#;

pub fn render_trace_flow_query(source: &Location, sink: &Location, tolerance: u8) -> String {
    TRACE_FLOW_TEMPLATE
        .replace("{src_file}", &source.uri)
        .replace("{src_lo}", &source.start_line.saturating_sub(tolerance as u64).max(1).to_string())
        .replace("{src_hi}", &(source.end_line + tolerance as u64).to_string())
        .replace("{sink_file}", &sink.uri)
        .replace("{sink_lo}", &sink.start_line.saturating_sub(tolerance as u64).max(1).to_string())
        .replace("{sink_hi}", &(sink.end_line + tolerance as u64).to_string())
}

impl CodeqlBackend for CliBackend {
    fn create_database(&self, workspace: &Path, language: &str, db_dir: &Path) -> Result<(), CodeqlError> {
        if !workspace.is_dir() {
            return Err(CodeqlError::WorkspaceNotFound(workspace.to_path_buf()));
        }
        let mut cmd = Command::new(&self.binary);
        cmd.arg("database")
            .arg("create")
            .arg(db_dir)
            .arg(format!("--language={language}"))
            .arg(format!("--source-root={}", workspace.display()))
            .arg("--overwrite");
        let (ok, output) = self.run_with_timeout(cmd, self.database_timeout)?;
        if !ok {
            return Err(CodeqlError::DatabaseCreation(output));
        }
        Ok(())
    }

    fn compile_query(&self, query_path: &Path, _query_text: &str) -> Result<CompileOutcome, CodeqlError> {
        let mut cmd = Command::new(&self.binary);
        cmd.arg("query").arg("compile").arg(query_path);
        let (ok, output) = self.run_with_timeout(cmd, self.query_timeout)?;
        Ok(if ok { CompileOutcome::Ok } else { CompileOutcome::Diagnostics(output) })
    }

    fn run_query(&self, db_dir: &Path, query_path: &Path, _query_text: &str, sarif_out: &Path) -> Result<RunOutcome, CodeqlError> {
        let mut cmd = Command::new(&self.binary);
        cmd.arg("database")
            .arg("analyze")
            .arg(db_dir)
            .arg(query_path)
            .arg("--format")
            .arg("sarif-latest")
            .arg("--output")
            .arg(sarif_out)
            .arg("--rerun");
        let (ok, output) = self.run_with_timeout(cmd, self.query_timeout)?;
        if !ok {
            return Ok(RunOutcome::Failure(output));
        }
        match fs::read(sarif_out) {
            Ok(bytes) => Ok(RunOutcome::Sarif(bytes)),
            Err(_) => Ok(RunOutcome::Failure(format!(
                "CodeQL query compilation failed - no output generated\n{output}"
            ))),
        }
    }

    fn trace_flow(
        &self,
        db_dir: &Path,
        source: &Location,
        sink: &Location,
        tolerance: u8,
        scratch: &Path,
    ) -> Result<TraceOutcome, CodeqlError> {
        let query_text = render_trace_flow_query(source, sink, tolerance);
        let query_path = scratch.join("trace_flow.ql");
        fs::create_dir_all(scratch)?;
        fs::write(&query_path, &query_text)?;
        let sarif_out = scratch.join("trace_flow.sarif");
        match self.run_query(db_dir, &query_path, &query_text, &sarif_out)? {
            RunOutcome::Failure(_) => Ok(TraceOutcome::NoFlow),
            RunOutcome::Sarif(bytes) => {
                let results = super::sarif::parse_sarif(&bytes)
                    .map_err(|e| CodeqlError::DatabaseCreation(e.to_string()))?;
                let steps: Vec<FlowStep> = results
                    .iter()
                    .filter_map(|r| r.code_flows.as_ref())
                    .flatten()
                    .flat_map(|f| f.steps.clone())
                    .collect();
                if steps.is_empty() {
                    Ok(TraceOutcome::NoFlow)
                } else {
                    Ok(TraceOutcome::Flow(steps))
                }
            }
        }
    }
}

// --- fixture backend ----------------------------------------------------------

#[derive(Debug, Clone)]
struct FixtureFlow {
    source: Location,
    sink: Location,
    steps: Vec<FlowStep>,
}

/// Replay backend for environments without CodeQL: responses are keyed by the
/// digest of the exact query text.
#[derive(Default)]
pub struct FixtureBackend {
    compiles: Mutex<HashMap<String, CompileOutcome>>,
    runs: Mutex<HashMap<String, RunOutcome>>,
    flows: Mutex<Vec<FixtureFlow>>,
    strict: bool,
}

impl FixtureBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Unknown query digests become hard errors instead of empty results.
    pub fn strict(mut self) -> Self {
        self.strict = true;
        self
    }

    pub fn with_run(self, query_text: &str, outcome: RunOutcome) -> Self {
        self.runs.lock().unwrap().insert(query_digest(query_text), outcome);
        self
    }

    pub fn with_compile(self, query_text: &str, outcome: CompileOutcome) -> Self {
        self.compiles.lock().unwrap().insert(query_digest(query_text), outcome);
        self
    }

    pub fn with_flow(self, source: Location, sink: Location, steps: Vec<FlowStep>) -> Self {
        self.flows.lock().unwrap().push(FixtureFlow { source, sink, steps });
        self
    }

    /// Load recorded entries from a directory of `<digest>.sarif`,
    /// `<digest>.error.txt` and `<digest>.compile-error.txt` files.
    pub fn from_dir(dir: &Path) -> Result<Self, CodeqlError> {
        let backend = FixtureBackend::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
            if let Some(digest) = name.strip_suffix(".sarif") {
                backend.runs.lock().unwrap().insert(digest.to_string(), RunOutcome::Sarif(fs::read(&path)?));
            } else if let Some(digest) = name.strip_suffix(".error.txt") {
                backend
                    .runs
                    .lock()
                    .unwrap()
                    .insert(digest.to_string(), RunOutcome::Failure(fs::read_to_string(&path)?));
            } else if let Some(digest) = name.strip_suffix(".compile-error.txt") {
                backend
                    .compiles
                    .lock()
                    .unwrap()
                    .insert(digest.to_string(), CompileOutcome::Diagnostics(fs::read_to_string(&path)?));
            }
        }
        Ok(backend)
    }

    fn lines_within(a: &Location, b: &Location, tolerance: u8) -> bool {
        a.uri == b.uri && a.start_line.abs_diff(b.start_line) <= tolerance as u64
    }
}

impl CodeqlBackend for FixtureBackend {
    fn create_database(&self, workspace: &Path, _language: &str, db_dir: &Path) -> Result<(), CodeqlError> {
        if !workspace.is_dir() {
            return Err(CodeqlError::WorkspaceNotFound(workspace.to_path_buf()));
        }
        fs::create_dir_all(db_dir)?;
        fs::write(db_dir.join("codeql-database.yml"), "# synthetic fixture database\n")?;
        Ok(())
    }

    fn compile_query(&self, _query_path: &Path, query_text: &str) -> Result<CompileOutcome, CodeqlError> {
        if query_text.trim().is_empty() {
            return Ok(CompileOutcome::Diagnostics("ERROR: empty query program".into()));
        }
        let digest = query_digest(query_text);
        if let Some(outcome) = self.compiles.lock().unwrap().get(&digest) {
            return Ok(outcome.clone());
        }
        if self.strict {
            return Err(CodeqlError::MissingFixture(digest));
        }
        Ok(CompileOutcome::Ok)
    }

    fn run_query(&self, _db_dir: &Path, _query_path: &Path, query_text: &str, sarif_out: &Path) -> Result<RunOutcome, CodeqlError> {
        // A query registered as non-compiling fails its run the same way the
        // CLI would.
        if let CompileOutcome::Diagnostics(d) = self.compile_query(_query_path, query_text)? {
            return Ok(RunOutcome::Failure(format!(
                "CodeQL query compilation failed - no output generated\n{d}"
            )));
        }
        let digest = query_digest(query_text);
        let outcome = match self.runs.lock().unwrap().get(&digest) {
            Some(o) => o.clone(),
            None if self.strict => return Err(CodeqlError::MissingFixture(digest)),
            None => RunOutcome::Sarif(
                super::sarif::to_sarif_bytes(&[], "qrs-fixture").expect("empty document serializes"),
            ),
        };
        if let RunOutcome::Sarif(bytes) = &outcome {
            if let Some(parent) = sarif_out.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(sarif_out, bytes)?;
        }
        Ok(outcome)
    }

    fn trace_flow(
        &self,
        _db_dir: &Path,
        source: &Location,
        sink: &Location,
        tolerance: u8,
        _scratch: &Path,
    ) -> Result<TraceOutcome, CodeqlError> {
        let flows = self.flows.lock().unwrap();
        for flow in flows.iter() {
            if Self::lines_within(&flow.source, source, tolerance)
                && Self::lines_within(&flow.sink, sink, tolerance)
            {
                return Ok(TraceOutcome::Flow(flow.steps.clone()));
            }
        }
        Ok(TraceOutcome::NoFlow)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_serves_recorded_sarif_by_digest() {
        let sarif = super::super::sarif::to_sarif_bytes(
            &[super::super::sarif::RawResult {
                rule_id: "r".into(),
                message: "m".into(),
                locations: vec![Location::line("a.py", 1)],
                code_flows: None,
            }],
            "t",
        )
        .unwrap();
        let backend = FixtureBackend::new().with_run("select 1", RunOutcome::Sarif(sarif));
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out.sarif");
        match backend.run_query(dir.path(), &dir.path().join("q.ql"), "select 1", &out).unwrap() {
            RunOutcome::Sarif(bytes) => {
                assert_eq!(super::super::sarif::parse_sarif(&bytes).unwrap().len(), 1)
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(out.exists());
    }

    #[test]
    fn empty_query_text_never_compiles() {
        let backend = FixtureBackend::new();
        let outcome = backend.compile_query(Path::new("q.ql"), "   ").unwrap();
        assert!(matches!(outcome, CompileOutcome::Diagnostics(_)));
    }

    #[test]
    fn registered_compile_failure_fails_the_run_too() {
        let backend =
            FixtureBackend::new().with_compile("from Call c select", CompileOutcome::Diagnostics("ERROR: syntax".into()));
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out.sarif");
        match backend.run_query(dir.path(), Path::new("q.ql"), "from Call c select", &out).unwrap() {
            RunOutcome::Failure(d) => assert!(d.contains("compilation failed")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fixture_flows_match_within_tolerance() {
        let source = Location::line("a.py", 100);
        let sink = Location::line("b.py", 200);
        let steps = vec![
            FlowStep { location: source.clone(), message: None },
            FlowStep { location: sink.clone(), message: None },
        ];
        let backend = FixtureBackend::new().with_flow(source.clone(), sink.clone(), steps);
        let dir = tempfile::tempdir().unwrap();
        let near = Location::line("a.py", 102);
        match backend.trace_flow(dir.path(), &near, &sink, 2, dir.path()).unwrap() {
            TraceOutcome::Flow(s) => assert_eq!(s.len(), 2),
            TraceOutcome::NoFlow => panic!("expected flow"),
        }
        let far = Location::line("a.py", 110);
        assert_eq!(
            backend.trace_flow(dir.path(), &far, &sink, 2, dir.path()).unwrap(),
            TraceOutcome::NoFlow
        );
    }

    #[test]
    fn trace_flow_template_renders_parameters() {
        let q = render_trace_flow_query(&Location::line("lib/a.py", 10), &Location::line("lib/b.py", 50), 2);
        assert!(q.contains(r#""lib/a.py""#));
        assert!(q.contains(">= 8"));
        assert!(q.contains("<= 12"));
        assert!(q.contains(r#""lib/b.py""#));
        assert!(q.contains(">= 48"));
        assert!(q.contains("<= 52"));
    }
}
