//! Review agent: clusters raw results by CWE taxonomy, minifies them, runs
//! one isolated budgeted review loop per cluster with code-inspection tools,
//! and emits evidence-backed findings with exploit payloads.

pub mod cluster;
pub mod cwe;
pub mod finding;
pub mod tools;

use std::path::{Path, PathBuf};

use serde_json::json;

use crate::agent::{
    run_loop, AgentError, AgentName, AgentSpec, LoopState, PromptSection, RunLoopOptions,
    ToolDispatcher, ToolOutcome, TranscriptLogger,
};
use crate::codeql::{CodeqlBridge, TraceOutcome};
use crate::llm::{Gateway, Message, ModelConfig, ToolCall, ToolSchema};

pub use cluster::{
    group_findings_by_mitre, group_findings_with_factor, minify_cluster, minify_cluster_with_factor,
    ClusteredResult, FindingCluster, BUDGET_FACTOR,
};
pub use cwe::{CweEntry, CweTable, Likelihood, Prevalence};
pub use finding::{
    dedup_findings, validate_candidate, CandidateFinding, Evidence, ExploitPayload, ExploitRating,
    Exploitability, Finding, Verdict, MR_CONFIDENCE_FLOOR, TP_CONFIDENCE_FLOOR,
};
pub use tools::{extract_code_snippet, grep_search, GrepOutput, SandboxError, Snippet, DEFAULT_SNIPPET_LINE_CAP};

/// Default line tolerance for the flow probe: midpoint of the valid 1..=3 range.
pub const DEFAULT_TRACE_TOLERANCE: u8 = 2;

pub fn review_tool_schemas() -> Vec<ToolSchema> {
    vec![
        ToolSchema::new(
            "extract_code_snippet",
            "Get code context for specific locations. Returns the exact lines with line-number annotations.",
            json!({
                "type": "object",
                "properties": {
                    "file_path": {"type": "string"},
                    "start_line": {"type": "integer", "minimum": 1},
                    "end_line": {"type": "integer", "minimum": 1}
                },
                "required": ["file_path", "start_line", "end_line"]
            }),
        ),
        ToolSchema::new(
            "grep_search",
            "Grep search for specific patterns in files under a restricted workspace path.",
            json!({
                "type": "object",
                "properties": {
                    "pattern": {"type": "string"},
                    "scope_path": {"type": "string", "description": "workspace-relative directory or file; defaults to the workspace root"}
                },
                "required": ["pattern"]
            }),
        ),
        ToolSchema::new(
            "trace_flow",
            "Probe for a data-flow propagation path from a source location to a sink location, with a line tolerance of 1 to 3 surrounding lines.",
            json!({
                "type": "object",
                "properties": {
                    "source": {"type": "object", "properties": {"file_path": {"type": "string"}, "line": {"type": "integer"}}, "required": ["file_path", "line"]},
                    "sink": {"type": "object", "properties": {"file_path": {"type": "string"}, "line": {"type": "integer"}}, "required": ["file_path", "line"]},
                    "tolerance": {"type": "integer", "minimum": 1, "maximum": 3}
                },
                "required": ["source", "sink"]
            }),
        ),
        ToolSchema::new(
            "submit_finding",
            "Submit one confirmed vulnerability assessment with precise location details. tp verdicts require confidence >= 90 and a complete exploit_payload; mr requires confidence >= 70.",
            json!({
                "type": "object",
                "properties": {
                    "codeql_query_uuids": {"type": "array", "items": {"type": "string"}},
                    "verdict": {"type": "string", "enum": ["tp", "fp", "mr"]},
                    "confidence": {"type": "integer", "minimum": 0, "maximum": 100},
                    "severity": {"type": "string", "enum": ["critical", "high", "medium", "low"]},
                    "cwe_ids": {"type": "array", "items": {"type": "string"}},
                    "description": {"type": "string"},
                    "file_path": {"type": "string"},
                    "start_line": {"type": "integer", "minimum": 1},
                    "code_snippet": {"type": "string"},
                    "reasoning": {"type": "string"},
                    "evidence": {"type": "object", "properties": {
                        "code_context": {"type": "string"},
                        "dataflow_analysis": {"type": "string"},
                        "notes": {"type": "string"}
                    }},
                    "exploit_payload": {"type": "object", "properties": {
                        "code_snippet": {"type": "string"},
                        "scenario": {"type": "string"},
                        "likelihood": {"type": "string", "enum": ["low", "medium", "high"]},
                        "impact": {"type": "string", "enum": ["low", "medium", "high"]},
                        "exploitability": {"type": "string", "enum": ["easy", "medium", "hard"]},
                        "prerequisites": {"type": ["string", "null"]},
                        "category": {"type": "string"}
                    }}
                },
                "required": ["verdict", "confidence", "severity", "cwe_ids", "description", "file_path", "start_line", "code_snippet", "reasoning", "evidence"]
            }),
        ),
    ]
}

fn default_sections() -> Vec<PromptSection> {
    vec![
        PromptSection::new(
            "Role",
            "You are an expert autonomous security findings reviewer. Review security findings and submit INDIVIDUAL confirmed vulnerabilities with precise location details.",
        ),
        PromptSection::new(
            "Goal",
            "For the given group of related query results, investigate each location, establish exploitability with evidence, and submit each confirmed vulnerability separately via submit_finding.",
        ),
        PromptSection::new(
            "Tools",
            "- extract_code_snippet: Get code context for specific locations\n- grep_search: Grep search for specific patterns in files\n- trace_flow: Probe data-flow reachability between two locations\n- submit_finding: Submit one validated assessment (tp, fp or mr)",
        ),
        PromptSection::new(
            "Strategy",
            "1. Examine each query's results array; each result is a potential vulnerability at a specific location.\n2. Investigate suspicious locations with extract_code_snippet and grep_search; use trace_flow to confirm source-to-sink reachability.\n3. For EACH confirmed vulnerability call submit_finding with exact file path and line numbers, reasoning, evidence, and (for tp) a complete exploit_payload.\n4. Iteration budget: {max_iterations} iterations total. When you reach this limit, you MUST submit all pending assessments.",
        ),
    ]
}

/// Build the review agent spec for one cluster; budget comes from the cluster.
pub fn review_agent_spec(cluster: &FindingCluster, preprompt: Option<String>) -> AgentSpec {
    AgentSpec {
        name: AgentName::R,
        sections: default_sections(),
        knowledge: None,
        preprompt,
        tools: review_tool_schemas(),
        max_iterations: cluster.budget.max(1),
    }
}

pub struct ReviewDeps<'a> {
    pub gateway: &'a Gateway,
    pub model: &'a ModelConfig,
    pub bridge: &'a CodeqlBridge,
    pub db_dir: &'a Path,
    pub workspace: &'a Path,
    pub snippet_line_cap: u64,
    pub trace_tolerance: u8,
}

struct ReviewDispatcher<'a> {
    deps: &'a ReviewDeps<'a>,
    cluster_key: String,
    findings: Vec<Finding>,
    rejections: u64,
}

impl ReviewDispatcher<'_> {
    fn extract(&self, call: &ToolCall) -> ToolOutcome {
        let args = &call.arguments;
        let file_path = args["file_path"].as_str().unwrap_or_default();
        let start = args["start_line"].as_u64().unwrap_or(0);
        let end = args["end_line"].as_u64().unwrap_or(start);
        match extract_code_snippet(self.deps.workspace, file_path, start, end, self.deps.snippet_line_cap)
        {
            Ok(snippet) => ToolOutcome::reply(serde_json::to_string(&snippet).unwrap_or_default()),
            Err(e) => ToolOutcome::error(e),
        }
    }

    fn grep(&self, call: &ToolCall) -> ToolOutcome {
        let args = &call.arguments;
        let pattern = args["pattern"].as_str().unwrap_or_default();
        let scope = args["scope_path"].as_str().unwrap_or(".");
        match grep_search(self.deps.workspace, pattern, scope) {
            Ok(out) => ToolOutcome::reply(serde_json::to_string(&out).unwrap_or_default()),
            Err(e) => ToolOutcome::error(e),
        }
    }

    fn trace(&self, call: &ToolCall) -> ToolOutcome {
        let args = &call.arguments;
        let parse_loc = |value: &serde_json::Value| -> Option<crate::codeql::Location> {
            let file = value["file_path"].as_str()?;
            let line = value["line"].as_u64()?;
            Some(crate::codeql::Location::line(file, line))
        };
        let (Some(source), Some(sink)) = (parse_loc(&args["source"]), parse_loc(&args["sink"])) else {
            return ToolOutcome::error("trace_flow requires source and sink objects with file_path and line");
        };
        let tolerance = args["tolerance"].as_u64().unwrap_or(self.deps.trace_tolerance as u64) as u8;
        match self.deps.bridge.trace_flow(self.deps.db_dir, self.deps.workspace, &source, &sink, tolerance) {
            Ok(TraceOutcome::Flow(steps)) => {
                ToolOutcome::reply(json!({ "flow": "found", "steps": steps }).to_string())
            }
            Ok(TraceOutcome::NoFlow) => ToolOutcome::reply(
                json!({ "flow": "none", "note": "no propagation path within tolerance" }).to_string(),
            ),
            Err(e) => ToolOutcome::error(e),
        }
    }

    fn submit(&mut self, call: &ToolCall) -> ToolOutcome {
        let candidate: CandidateFinding = match serde_json::from_value(call.arguments.clone()) {
            Ok(c) => c,
            Err(e) => return ToolOutcome::error(format!("submission is not well-formed: {e}")),
        };
        match validate_candidate(&candidate, self.deps.workspace, &self.cluster_key) {
            Ok(finding) => {
                let id = finding.finding_id.clone();
                self.findings.push(finding);
                ToolOutcome::reply(json!({ "accepted": true, "finding_id": id }).to_string())
            }
            Err(reasons) => {
                self.rejections += 1;
                ToolOutcome::reply(json!({ "accepted": false, "reasons": reasons }).to_string())
            }
        }
    }
}

impl ToolDispatcher for ReviewDispatcher<'_> {
    fn dispatch(&mut self, call: &ToolCall) -> ToolOutcome {
        match call.name.as_str() {
            "extract_code_snippet" => self.extract(call),
            "grep_search" => self.grep(call),
            "trace_flow" => self.trace(call),
            "submit_finding" => self.submit(call),
            other => ToolOutcome::error(format!("unknown tool '{other}'")),
        }
    }
}

fn render_cluster_seed(cluster: &FindingCluster) -> String {
    format!(
        "Review the following group of related static-analysis results.\n\
         Group key: {}\nRelated CWE ids: {}\nContributing queries: {}\n\
         Iteration budget for this group: {}\n\nResults (minified):\n{}",
        cluster.key,
        cluster.related_cwe_ids.join(", "),
        cluster.query_ids.join(", "),
        cluster.budget,
        serde_json::to_string_pretty(&cluster.results).unwrap_or_default()
    )
}

pub struct ReviewOutcome {
    pub findings: Vec<Finding>,
    pub state: LoopState,
    pub rejections: u64,
}

/// Review one cluster in an isolated context thread.
pub fn run_review(
    cluster: &FindingCluster,
    spec: &AgentSpec,
    session: &str,
    deps: &ReviewDeps<'_>,
    log: Option<&TranscriptLogger>,
) -> Result<ReviewOutcome, AgentError> {
    let mut dispatcher =
        ReviewDispatcher { deps, cluster_key: cluster.key.clone(), findings: Vec::new(), rejections: 0 };
    let seed = vec![Message::user(render_cluster_seed(cluster))];
    let state = run_loop(
        deps.gateway,
        session,
        deps.model,
        spec,
        seed,
        &mut dispatcher,
        log,
        &RunLoopOptions::default(),
    )?;
    Ok(ReviewOutcome { findings: dispatcher.findings, state, rejections: dispatcher.rejections })
}

/// Paths used by review sessions: cluster ordinal keeps session ids unique
/// even when two clusters share an attribute key.
pub fn review_session_name(index: usize, cluster_key: &str) -> String {
    format!("r_{index:02}_{cluster_key}")
}

pub fn workspace_rel(workspace: &Path, path: &Path) -> PathBuf {
    path.strip_prefix(workspace).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codeql::FixtureBackend;
    use crate::llm::ScriptedBackend;
    use std::sync::Arc;

    fn simple_cluster(budget: u32) -> FindingCluster {
        FindingCluster {
            key: "critical_often_medium".into(),
            query_ids: vec!["q1".into()],
            results: vec![],
            related_cwe_ids: vec!["cwe-094".into(), "cwe-502".into()],
            budget,
        }
    }

    fn deps_fixture<'a>(
        gateway: &'a Gateway,
        model: &'a ModelConfig,
        bridge: &'a CodeqlBridge,
        db: &'a Path,
        ws: &'a Path,
    ) -> ReviewDeps<'a> {
        ReviewDeps {
            gateway,
            model,
            bridge,
            db_dir: db,
            workspace: ws,
            snippet_line_cap: DEFAULT_SNIPPET_LINE_CAP,
            trace_tolerance: DEFAULT_TRACE_TOLERANCE,
        }
    }

    fn call(id: &str, name: &str, args: serde_json::Value) -> ToolCall {
        ToolCall::new(id, name, args)
    }

    #[test]
    fn scripted_tp_without_payload_is_rejected_and_not_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let ws = dir.path().join("ws");
        std::fs::create_dir_all(&ws).unwrap();
        std::fs::write(ws.join("a.py"), "x = eval(input())\n").unwrap();

        let submission = json!({
            "verdict": "tp",
            "confidence": 95,
            "severity": "critical",
            "cwe_ids": ["cwe-094"],
            "description": "eval of user input",
            "file_path": "a.py",
            "start_line": 1,
            "code_snippet": "x = eval(input())",
            "reasoning": "direct eval",
            "evidence": {"code_context": "c", "dataflow_analysis": "d", "notes": "n"}
        });
        let backend = ScriptedBackend::new().with_session(
            "r_00_critical_often_medium",
            vec![
                Message::assistant_with_calls("", vec![call("1", "submit_finding", submission)]),
                Message::assistant("done"),
            ],
        );
        let gateway = Gateway::new(Arc::new(backend));
        let model = ModelConfig::new("m", 0.0);
        let bridge = CodeqlBridge::new(Arc::new(FixtureBackend::new()), dir.path().join("reports"));
        let cluster = simple_cluster(10);
        let spec = review_agent_spec(&cluster, None);
        let deps = deps_fixture(&gateway, &model, &bridge, dir.path(), &ws);
        let outcome =
            run_review(&cluster, &spec, "r_00_critical_often_medium", &deps, None).unwrap();
        assert!(outcome.findings.is_empty());
        assert_eq!(outcome.rejections, 1);
        let rejection = outcome
            .state
            .transcript
            .iter()
            .find(|m| m.tool_call_id.as_deref() == Some("1"))
            .unwrap();
        assert!(rejection.content.contains("exploit_payload is required"));
    }

    #[test]
    fn budget_exhaustion_with_no_submission_yields_empty_findings() {
        let dir = tempfile::tempdir().unwrap();
        let ws = dir.path().join("ws");
        std::fs::create_dir_all(&ws).unwrap();
        std::fs::write(ws.join("a.py"), "x = 1\n").unwrap();
        // Agent keeps grepping for its whole budget of 10.
        let turns: Vec<Message> = (0..10)
            .map(|i| {
                Message::assistant_with_calls(
                    "",
                    vec![call(&format!("c{i}"), "grep_search", json!({"pattern": "x"}))],
                )
            })
            .collect();
        let backend = ScriptedBackend::new().with_session("r_00_k", turns);
        let gateway = Gateway::new(Arc::new(backend));
        let model = ModelConfig::new("m", 0.0);
        let bridge = CodeqlBridge::new(Arc::new(FixtureBackend::new()), dir.path().join("reports"));
        let mut cluster = simple_cluster(10);
        cluster.key = "k".into();
        let spec = review_agent_spec(&cluster, None);
        let deps = deps_fixture(&gateway, &model, &bridge, dir.path(), &ws);
        let outcome = run_review(&cluster, &spec, "r_00_k", &deps, None).unwrap();
        assert!(outcome.findings.is_empty());
        assert!(outcome.state.budget_exhausted);
        assert_eq!(outcome.state.iteration, 10);
        assert!(outcome.state.warning_injected);
    }

    #[test]
    fn trace_flow_tool_reports_argument_errors_as_payloads() {
        let dir = tempfile::tempdir().unwrap();
        let ws = dir.path().join("ws");
        std::fs::create_dir_all(&ws).unwrap();
        std::fs::write(ws.join("a.py"), "x = 1\n").unwrap();
        let bridge = CodeqlBridge::new(Arc::new(FixtureBackend::new()), dir.path().join("reports"));
        let model = ModelConfig::new("m", 0.0);
        let gateway = Gateway::new(Arc::new(ScriptedBackend::new()));
        let deps = deps_fixture(&gateway, &model, &bridge, dir.path(), &ws);
        let mut dispatcher = ReviewDispatcher {
            deps: &deps,
            cluster_key: "k".into(),
            findings: vec![],
            rejections: 0,
        };
        let outcome = dispatcher.dispatch(&call(
            "1",
            "trace_flow",
            json!({
                "source": {"file_path": "a.py", "line": 1},
                "sink": {"file_path": "a.py", "line": 1},
                "tolerance": 9
            }),
        ));
        assert!(outcome.payload.contains("tolerance"));
        assert!(!outcome.finalize);
    }
}
