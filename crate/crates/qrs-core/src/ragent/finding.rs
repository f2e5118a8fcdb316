//! Finding artifacts: the evidence-backed review output, submission
//! validation, and post-review duplicate elimination.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codeql::valid_cwe_id;
use crate::ingest::safe_join;
use crate::sagent::check::SanitizationCheck;
use crate::severity::Severity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Tp,
    Fp,
    Mr,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Tp => "tp",
            Verdict::Fp => "fp",
            Verdict::Mr => "mr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExploitRating {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exploitability {
    Easy,
    Medium,
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploitPayload {
    pub code_snippet: String,
    pub scenario: String,
    pub likelihood: ExploitRating,
    pub impact: ExploitRating,
    pub exploitability: Exploitability,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prerequisites: Option<String>,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub code_context: String,
    pub dataflow_analysis: String,
    pub notes: String,
}

/// Review-agent artifact. Field order mirrors the emitted JSON layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub codeql_query_uuids: Vec<String>,
    pub finding_id: String,
    pub verdict: Verdict,
    pub confidence: u8,
    pub severity: Severity,
    pub cwe_ids: Vec<String>,
    pub description: String,
    pub file_path: String,
    pub start_line: u64,
    pub code_snippet: String,
    pub reasoning: String,
    pub evidence: Evidence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exploit_payload: Option<ExploitPayload>,
    pub group: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sanitization_check: Option<SanitizationCheck>,
}

/// Candidate as submitted by the model; everything optional so validation can
/// name each missing field instead of failing the parse.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct CandidateFinding {
    #[serde(default)]
    pub codeql_query_uuids: Vec<String>,
    pub verdict: Option<String>,
    pub confidence: Option<i64>,
    pub severity: Option<String>,
    #[serde(default)]
    pub cwe_ids: Vec<String>,
    pub description: Option<String>,
    pub file_path: Option<String>,
    pub start_line: Option<u64>,
    pub code_snippet: Option<String>,
    pub reasoning: Option<String>,
    pub evidence: Option<CandidateEvidence>,
    pub exploit_payload: Option<CandidateExploitPayload>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct CandidateEvidence {
    pub code_context: Option<String>,
    pub dataflow_analysis: Option<String>,
    pub notes: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct CandidateExploitPayload {
    pub code_snippet: Option<String>,
    pub scenario: Option<String>,
    pub likelihood: Option<String>,
    pub impact: Option<String>,
    pub exploitability: Option<String>,
    pub prerequisites: Option<String>,
    pub category: Option<String>,
}

pub const TP_CONFIDENCE_FLOOR: u8 = 90;
pub const MR_CONFIDENCE_FLOOR: u8 = 70;

fn parse_rating(value: &Option<String>, field: &str, reasons: &mut Vec<String>) -> Option<ExploitRating> {
    match value.as_deref().map(str::to_ascii_lowercase).as_deref() {
        Some("low") => Some(ExploitRating::Low),
        Some("medium") => Some(ExploitRating::Medium),
        Some("high") => Some(ExploitRating::High),
        Some(other) => {
            reasons.push(format!("{field} must be low/medium/high, got '{other}'"));
            None
        }
        None => {
            reasons.push(format!("{field} is missing"));
            None
        }
    }
}

/// Validate a candidate against the finding invariants.
///
/// A tp verdict demands confidence >= 90 and a complete exploit payload; mr
/// demands confidence >= 70; the file path must resolve to a real file inside
/// the workspace. Returns the reasons for rejection, naming each bad field.
pub fn validate_candidate(
    candidate: &CandidateFinding,
    workspace: &Path,
    group: &str,
) -> Result<Finding, Vec<String>> {
    let mut reasons = Vec::new();

    let verdict = match candidate.verdict.as_deref().map(str::to_ascii_lowercase).as_deref() {
        Some("tp") => Some(Verdict::Tp),
        Some("fp") => Some(Verdict::Fp),
        Some("mr") => Some(Verdict::Mr),
        Some(other) => {
            reasons.push(format!("verdict must be tp/fp/mr, got '{other}'"));
            None
        }
        None => {
            reasons.push("verdict is missing".into());
            None
        }
    };

    let confidence = match candidate.confidence {
        Some(c) if (0..=100).contains(&c) => Some(c as u8),
        Some(c) => {
            reasons.push(format!("confidence must be in 0..=100, got {c}"));
            None
        }
        None => {
            reasons.push("confidence is missing".into());
            None
        }
    };

    let severity = match candidate.severity.as_deref().and_then(Severity::parse) {
        Some(s) => Some(s),
        None => {
            reasons.push("severity must be critical/high/medium/low".into());
            None
        }
    };

    if candidate.cwe_ids.is_empty() {
        reasons.push("cwe_ids must be non-empty".into());
    }
    for id in &candidate.cwe_ids {
        if !valid_cwe_id(id) {
            reasons.push(format!("cwe id '{id}' does not match the cwe-NNN pattern"));
        }
    }

    let file_path = candidate.file_path.clone().unwrap_or_default();
    if file_path.is_empty() {
        reasons.push("file_path is missing".into());
    } else {
        match safe_join(workspace, &file_path) {
            Ok(joined) if joined.is_file() => {}
            Ok(_) => reasons.push(format!("file_path '{file_path}' does not exist in the workspace")),
            Err(_) => reasons.push(format!("file_path '{file_path}' escapes the workspace")),
        }
    }

    let start_line = match candidate.start_line {
        Some(l) if l >= 1 => Some(l),
        _ => {
            reasons.push("start_line must be a positive line number".into());
            None
        }
    };

    for (field, value) in [
        ("description", &candidate.description),
        ("code_snippet", &candidate.code_snippet),
        ("reasoning", &candidate.reasoning),
    ] {
        if value.as_deref().map(str::trim).filter(|v| !v.is_empty()).is_none() {
            reasons.push(format!("{field} is missing"));
        }
    }

    let evidence = match &candidate.evidence {
        Some(e) => {
            let mut pick = |field: &str, v: &Option<String>| {
                v.clone().unwrap_or_else(|| {
                    reasons.push(format!("evidence.{field} is missing"));
                    String::new()
                })
            };
            Evidence {
                code_context: pick("code_context", &e.code_context),
                dataflow_analysis: pick("dataflow_analysis", &e.dataflow_analysis),
                notes: pick("notes", &e.notes),
            }
        }
        None => {
            reasons.push("evidence is missing".into());
            Evidence { code_context: String::new(), dataflow_analysis: String::new(), notes: String::new() }
        }
    };

    // Confidence thresholds per verdict.
    if let (Some(v), Some(c)) = (verdict, confidence) {
        match v {
            Verdict::Tp if c < TP_CONFIDENCE_FLOOR => {
                reasons.push(format!("tp requires confidence >= {TP_CONFIDENCE_FLOOR}, got {c}"));
            }
            Verdict::Mr if c < MR_CONFIDENCE_FLOOR => {
                reasons.push(format!("mr requires confidence >= {MR_CONFIDENCE_FLOOR}, got {c}"));
            }
            _ => {}
        }
    }

    // tp requires the full exploit payload; fp and mr may omit it.
    let exploit_payload = match (&candidate.exploit_payload, verdict) {
        (Some(p), _) => {
            let mut text = |field: &str, v: &Option<String>| match v.as_deref().map(str::trim) {
                Some(t) if !t.is_empty() => t.to_string(),
                _ => {
                    reasons.push(format!("exploit_payload.{field} is missing"));
                    String::new()
                }
            };
            let code_snippet = text("code_snippet", &p.code_snippet);
            let scenario = text("scenario", &p.scenario);
            let category = text("category", &p.category);
            let likelihood = parse_rating(&p.likelihood, "exploit_payload.likelihood", &mut reasons);
            let impact = parse_rating(&p.impact, "exploit_payload.impact", &mut reasons);
            let exploitability = match p.exploitability.as_deref().map(str::to_ascii_lowercase).as_deref() {
                Some("easy") => Some(Exploitability::Easy),
                Some("medium") => Some(Exploitability::Medium),
                Some("hard") => Some(Exploitability::Hard),
                Some(other) => {
                    reasons.push(format!("exploit_payload.exploitability must be easy/medium/hard, got '{other}'"));
                    None
                }
                None => {
                    reasons.push("exploit_payload.exploitability is missing".into());
                    None
                }
            };
            match (likelihood, impact, exploitability) {
                (Some(likelihood), Some(impact), Some(exploitability)) => Some(ExploitPayload {
                    code_snippet,
                    scenario,
                    likelihood,
                    impact,
                    exploitability,
                    prerequisites: p.prerequisites.clone(),
                    category,
                }),
                _ => None,
            }
        }
        (None, Some(Verdict::Tp)) => {
            reasons.push("exploit_payload is required for tp verdicts".into());
            None
        }
        (None, _) => None,
    };

    if !reasons.is_empty() {
        return Err(reasons);
    }

    Ok(Finding {
        codeql_query_uuids: candidate.codeql_query_uuids.clone(),
        finding_id: uuid::Uuid::new_v4().to_string(),
        verdict: verdict.expect("validated"),
        confidence: confidence.expect("validated"),
        severity: severity.expect("validated"),
        cwe_ids: candidate.cwe_ids.clone(),
        description: candidate.description.clone().expect("validated"),
        file_path,
        start_line: start_line.expect("validated"),
        code_snippet: candidate.code_snippet.clone().expect("validated"),
        reasoning: candidate.reasoning.clone().expect("validated"),
        evidence,
        exploit_payload,
        group: group.to_string(),
        sanitization_check: None,
    })
}

fn cwe_overlap(a: &Finding, b: &Finding) -> bool {
    a.cwe_ids.iter().any(|id| b.cwe_ids.contains(id))
}

/// Pattern-stuttering elimination: findings at the same `(file_path,
/// start_line)` with overlapping CWE ids merge into the highest-confidence
/// member (ties keep the lexicographically earlier finding_id), unioning
/// query uuids. Idempotent and independent of input order.
pub fn dedup_findings(findings: Vec<Finding>) -> Vec<Finding> {
    // Group by location first.
    let mut sorted = findings;
    sorted.sort_by(|a, b| {
        (a.file_path.as_str(), a.start_line, a.finding_id.as_str()).cmp(&(
            b.file_path.as_str(),
            b.start_line,
            b.finding_id.as_str(),
        ))
    });

    let mut out: Vec<Finding> = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len()
            && sorted[j].file_path == sorted[i].file_path
            && sorted[j].start_line == sorted[i].start_line
        {
            j += 1;
        }
        let location_group = &sorted[i..j];

        // Union-find over CWE overlap within the location group.
        let n = location_group.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            if parent[i] != i {
                let root = find(parent, parent[i]);
                parent[i] = root;
            }
            parent[i]
        }
        for a in 0..n {
            for b in (a + 1)..n {
                if cwe_overlap(&location_group[a], &location_group[b]) {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra != rb {
                        parent[rb] = ra;
                    }
                }
            }
        }

        let mut roots: Vec<usize> = Vec::new();
        for k in 0..n {
            let r = find(&mut parent, k);
            if !roots.contains(&r) {
                roots.push(r);
            }
        }
        for root in roots {
            let members: Vec<&Finding> =
                (0..n).filter(|&k| find(&mut parent, k) == root).map(|k| &location_group[k]).collect();
            let winner = members
                .iter()
                .copied()
                .max_by(|a, b| {
                    a.confidence
                        .cmp(&b.confidence)
                        // Equal confidence: earlier finding_id wins, so prefer
                        // the *smaller* id when picking the maximum.
                        .then_with(|| b.finding_id.cmp(&a.finding_id))
                })
                .expect("group is non-empty");
            let mut merged = winner.clone();
            let mut uuids: Vec<String> =
                members.iter().flat_map(|m| m.codeql_query_uuids.iter().cloned()).collect();
            uuids.sort();
            uuids.dedup();
            merged.codeql_query_uuids = uuids;
            out.push(merged);
        }
        i = j;
    }

    out.sort_by(|a, b| {
        (a.file_path.as_str(), a.start_line, a.finding_id.as_str()).cmp(&(
            b.file_path.as_str(),
            b.start_line,
            b.finding_id.as_str(),
        ))
    });
    out
}
