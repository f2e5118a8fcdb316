//! SARIF 2.1.x parsing and emission, reduced to the retained field set:
//! rule, message, locations, and code flows. Unknown fields are ignored on
//! input; relative URIs are preserved untouched.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SarifError {
    #[error("malformed SARIF at {path}: {detail}")]
    Malformed { path: String, detail: String },
    #[error("serialization failed: {0}")]
    Serialize(String),
}

/// A single physical location inside the scanned workspace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Location {
    pub uri: String,
    pub start_line: u64,
    pub end_line: u64,
}

impl Location {
    pub fn new(uri: impl Into<String>, start_line: u64, end_line: u64) -> Self {
        Location { uri: uri.into(), start_line, end_line }
    }

    pub fn line(uri: impl Into<String>, line: u64) -> Self {
        Location::new(uri, line, line)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowStep {
    pub location: Location,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeFlow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// At least one step when the flow exists at all.
    pub steps: Vec<FlowStep>,
}

/// One analysis result mapped out of a SARIF document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResult {
    pub rule_id: String,
    pub message: String,
    pub locations: Vec<Location>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_flows: Option<Vec<CodeFlow>>,
}

// --- wire model -------------------------------------------------------------

#[derive(Debug, Default, Serialize, Deserialize)]
struct SarifDocument {
    version: String,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "$schema")]
    schema: Option<String>,
    #[serde(default)]
    runs: Vec<SarifRun>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct SarifRun {
    #[serde(default)]
    tool: SarifTool,
    #[serde(default)]
    results: Vec<SarifResult>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct SarifTool {
    #[serde(default)]
    driver: SarifDriver,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct SarifDriver {
    #[serde(default)]
    name: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct SarifResult {
    #[serde(default, rename = "ruleId", skip_serializing_if = "Option::is_none")]
    rule_id: Option<String>,
    #[serde(default)]
    message: SarifMessage,
    #[serde(default)]
    locations: Vec<SarifLocation>,
    #[serde(default, rename = "codeFlows", skip_serializing_if = "Option::is_none")]
    code_flows: Option<Vec<SarifCodeFlow>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct SarifMessage {
    #[serde(default)]
    text: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct SarifLocation {
    #[serde(default, rename = "physicalLocation", skip_serializing_if = "Option::is_none")]
    physical_location: Option<SarifPhysicalLocation>,
    /// Standard threadFlowLocation nesting: `{"location": {...}}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    location: Option<Box<SarifLocation>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    message: Option<SarifMessage>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct SarifPhysicalLocation {
    #[serde(default, rename = "artifactLocation")]
    artifact_location: SarifArtifactLocation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    region: Option<SarifRegion>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct SarifArtifactLocation {
    #[serde(default)]
    uri: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct SarifRegion {
    #[serde(default, rename = "startLine")]
    start_line: u64,
    #[serde(default, rename = "endLine", skip_serializing_if = "Option::is_none")]
    end_line: Option<u64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct SarifCodeFlow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    message: Option<SarifMessage>,
    #[serde(default, rename = "threadFlows")]
    thread_flows: Vec<SarifThreadFlow>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct SarifThreadFlow {
    #[serde(default)]
    locations: Vec<SarifLocation>,
}

// --- mapping ----------------------------------------------------------------

fn map_location(loc: &SarifLocation) -> Option<(Location, Option<String>)> {
    // Accept both the flattened shape (physicalLocation directly on the
    // entry) and the standard threadFlowLocation nesting.
    if let Some(phys) = &loc.physical_location {
        let region = phys.region.as_ref();
        let start = region.map(|r| r.start_line).unwrap_or(1);
        let end = region.and_then(|r| r.end_line).unwrap_or(start);
        return Some((
            Location { uri: phys.artifact_location.uri.clone(), start_line: start, end_line: end },
            loc.message.as_ref().map(|m| m.text.clone()),
        ));
    }
    if let Some(inner) = &loc.location {
        let (mapped, inner_msg) = map_location(inner)?;
        let msg = loc.message.as_ref().map(|m| m.text.clone()).or(inner_msg);
        return Some((mapped, msg));
    }
    None
}

fn map_result(result: &SarifResult) -> RawResult {
    let locations = result.locations.iter().filter_map(|l| map_location(l).map(|(loc, _)| loc)).collect();
    let code_flows = result.code_flows.as_ref().map(|flows| {
        flows
            .iter()
            .map(|flow| CodeFlow {
                message: flow.message.as_ref().map(|m| m.text.clone()),
                steps: flow
                    .thread_flows
                    .iter()
                    .flat_map(|tf| tf.locations.iter())
                    .filter_map(|l| {
                        map_location(l).map(|(location, message)| FlowStep { location, message })
                    })
                    .collect(),
            })
            .filter(|flow| !flow.steps.is_empty())
            .collect::<Vec<_>>()
    });
    RawResult {
        rule_id: result.rule_id.clone().unwrap_or_default(),
        message: result.message.text.clone(),
        locations,
        code_flows: code_flows.filter(|f| !f.is_empty()),
    }
}

/// Parse a SARIF document into the retained result set.
pub fn parse_sarif(bytes: &[u8]) -> Result<Vec<RawResult>, SarifError> {
    let mut deserializer = serde_json::Deserializer::from_slice(bytes);
    let document: SarifDocument =
        serde_path_to_error::deserialize(&mut deserializer).map_err(|e| SarifError::Malformed {
            path: e.path().to_string(),
            detail: e.inner().to_string(),
        })?;
    Ok(document.runs.iter().flat_map(|run| run.results.iter().map(map_result)).collect())
}

fn unmap_location(loc: &Location, message: Option<&String>) -> SarifLocation {
    SarifLocation {
        physical_location: Some(SarifPhysicalLocation {
            artifact_location: SarifArtifactLocation { uri: loc.uri.clone() },
            region: Some(SarifRegion { start_line: loc.start_line, end_line: Some(loc.end_line) }),
        }),
        location: None,
        message: message.map(|m| SarifMessage { text: m.clone() }),
    }
}

/// Emit SARIF 2.1.0 for a result list.
pub fn to_sarif_bytes(results: &[RawResult], tool_name: &str) -> Result<Vec<u8>, SarifError> {
    let document = SarifDocument {
        version: "2.1.0".to_string(),
        schema: None,
        runs: vec![SarifRun {
            tool: SarifTool { driver: SarifDriver { name: tool_name.to_string() } },
            results: results
                .iter()
                .map(|r| SarifResult {
                    rule_id: if r.rule_id.is_empty() { None } else { Some(r.rule_id.clone()) },
                    message: SarifMessage { text: r.message.clone() },
                    locations: r.locations.iter().map(|l| unmap_location(l, None)).collect(),
                    code_flows: r.code_flows.as_ref().map(|flows| {
                        flows
                            .iter()
                            .map(|flow| SarifCodeFlow {
                                message: flow.message.as_ref().map(|m| SarifMessage { text: m.clone() }),
                                thread_flows: vec![SarifThreadFlow {
                                    locations: flow
                                        .steps
                                        .iter()
                                        .map(|s| unmap_location(&s.location, s.message.as_ref()))
                                        .collect(),
                                }],
                            })
                            .collect()
                    }),
                })
                .collect(),
        }],
    };
    serde_json::to_vec_pretty(&document).map_err(|e| SarifError::Serialize(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_results_with_flattened_thread_flow_locations() {
        let doc = serde_json::json!({
            "version": "2.1.4",
            "runs": [{
                "tool": {"driver": {"name": "codeql"}},
                "results": [{
                    "ruleId": "py/dangerous-call",
                    "message": {"text": "User input flows to dangerous getattr"},
                    "locations": [{
                        "physicalLocation": {
                            "artifactLocation": {"uri": "lib3/yaml/constructor.py"},
                            "region": {"startLine": 610, "endLine": 612}
                        }
                    }],
                    "codeFlows": [{
                        "message": {"text": "flow"},
                        "threadFlows": [{"locations": [
                            {"physicalLocation": {"artifactLocation": {"uri": "lib3/yaml/constructor.py"},
                             "region": {"startLine": 600}}},
                            {"location": {"physicalLocation": {"artifactLocation": {"uri": "lib3/yaml/constructor.py"},
                             "region": {"startLine": 610}}}, "message": {"text": "sink"}}
                        ]}]
                    }]
                }]
            }]
        });
        let results = parse_sarif(serde_json::to_vec(&doc).unwrap().as_slice()).unwrap();
        assert_eq!(results.len(), 1);
        let r = &results[0];
        assert_eq!(r.rule_id, "py/dangerous-call");
        assert_eq!(r.locations[0].uri, "lib3/yaml/constructor.py");
        assert_eq!(r.locations[0].end_line, 612);
        let flow = &r.code_flows.as_ref().unwrap()[0];
        assert_eq!(flow.steps.len(), 2);
        assert_eq!(flow.steps[0].location.start_line, 600);
        assert_eq!(flow.steps[1].message.as_deref(), Some("sink"));
    }

    #[test]
    fn empty_runs_parse_to_empty_list() {
        let results = parse_sarif(br#"{"version": "2.1.0", "runs": []}"#).unwrap();
        assert!(results.is_empty());
    }

    #[test]
    fn malformed_document_names_the_offending_path() {
        let err =
            parse_sarif(br#"{"version": "2.1.0", "runs": [{"results": [{"message": 42}]}]}"#)
                .unwrap_err();
        match err {
            SarifError::Malformed { path, .. } => assert!(path.contains("runs[0].results[0].message"), "path was {path}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn round_trip_preserves_retained_fields() {
        let results = vec![RawResult {
            rule_id: "r1".into(),
            message: "m".into(),
            locations: vec![Location::new("a/b.py", 3, 5)],
            code_flows: Some(vec![CodeFlow {
                message: Some("f".into()),
                steps: vec![
                    FlowStep { location: Location::line("a/b.py", 1), message: None },
                    FlowStep { location: Location::line("a/b.py", 3), message: Some("sink".into()) },
                ],
            }]),
        }];
        let bytes = to_sarif_bytes(&results, "qrs").unwrap();
        let reparsed = parse_sarif(&bytes).unwrap();
        assert_eq!(results, reparsed);
    }
}
