//! Query records and the consolidated query report.

use serde::{Deserialize, Serialize};

use crate::severity::Severity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryOutcome {
    /// Compiled and returned findings.
    SucceededWithResults,
    /// Compiled but matched nothing.
    SucceededEmpty,
    /// Compilation or validation error; both classify as failed.
    Failed,
}

pub fn valid_cwe_id(id: &str) -> bool {
    id.strip_prefix("cwe-")
        .is_some_and(|digits| !digits.is_empty() && digits.len() <= 4 && digits.bytes().all(|b| b.is_ascii_digit()))
}

/// One synthesized query execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub hypothesis: String,
    pub severity: Severity,
    pub cwe_ids: Vec<String>,
    pub query_text: String,
    pub outcome: QueryOutcome,
    pub result_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sarif_path: Option<String>,
    /// Set when this execution re-ran a query repaired by the fixup loop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predecessor_id: Option<String>,
}

impl QueryRecord {
    pub fn check_invariants(&self) -> Result<(), String> {
        match self.outcome {
            QueryOutcome::SucceededWithResults => {
                if self.result_count == 0 {
                    return Err("succeeded_with_results requires result_count > 0".into());
                }
                if self.sarif_path.is_none() {
                    return Err("succeeded_with_results requires a sarif_path".into());
                }
            }
            QueryOutcome::SucceededEmpty => {
                if self.result_count != 0 {
                    return Err("succeeded_empty requires result_count == 0".into());
                }
            }
            QueryOutcome::Failed => {
                if self.diagnostics.as_ref().is_none_or(|d| d.is_empty()) {
                    return Err("failed requires non-empty diagnostics".into());
                }
                if self.sarif_path.is_some() {
                    return Err("failed must not carry a sarif_path".into());
                }
            }
        }
        if self.cwe_ids.is_empty() {
            return Err("cwe_ids must be non-empty".into());
        }
        for id in &self.cwe_ids {
            if !valid_cwe_id(id) {
                return Err(format!("'{id}' does not match the cwe-NNN pattern"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub succeeded_with_results: u64,
    pub succeeded_empty: u64,
    pub failed: u64,
}

impl OutcomeCounts {
    pub fn tally(records: &[QueryRecord]) -> Self {
        let mut counts = OutcomeCounts::default();
        for r in records {
            match r.outcome {
                QueryOutcome::SucceededWithResults => counts.succeeded_with_results += 1,
                QueryOutcome::SucceededEmpty => counts.succeeded_empty += 1,
                QueryOutcome::Failed => counts.failed += 1,
            }
        }
        counts
    }

    pub fn total(&self) -> u64 {
        self.succeeded_with_results + self.succeeded_empty + self.failed
    }
}

/// Navigational map handed from the query agent to the review agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QReport {
    pub package: String,
    pub generated_at: String,
    pub counts: OutcomeCounts,
    pub records: Vec<QueryRecord>,
}

impl QReport {
    pub fn from_records(package: impl Into<String>, records: Vec<QueryRecord>) -> Self {
        QReport {
            package: package.into(),
            generated_at: chrono::Utc::now().to_rfc3339(),
            counts: OutcomeCounts::tally(&records),
            records,
        }
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if self.counts != OutcomeCounts::tally(&self.records) {
            return Err("per-outcome counts do not match the record list".into());
        }
        for r in &self.records {
            r.check_invariants()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(outcome: QueryOutcome, count: u64) -> QueryRecord {
        QueryRecord {
            query_id: "20260118133453".into(),
            hypothesis: "h".into(),
            severity: Severity::Critical,
            cwe_ids: vec!["cwe-094".into()],
            query_text: "import python".into(),
            outcome,
            result_count: count,
            diagnostics: matches!(outcome, QueryOutcome::Failed).then(|| "boom".to_string()),
            sarif_path: (!matches!(outcome, QueryOutcome::Failed)).then(|| "r.sarif".to_string()),
            predecessor_id: None,
        }
    }

    #[test]
    fn outcome_invariants_hold_and_violations_are_caught() {
        assert!(record(QueryOutcome::SucceededWithResults, 13).check_invariants().is_ok());
        assert!(record(QueryOutcome::SucceededEmpty, 0).check_invariants().is_ok());
        assert!(record(QueryOutcome::Failed, 0).check_invariants().is_ok());

        assert!(record(QueryOutcome::SucceededWithResults, 0).check_invariants().is_err());
        let mut bad = record(QueryOutcome::Failed, 0);
        bad.diagnostics = None;
        assert!(bad.check_invariants().is_err());
        let mut bad = record(QueryOutcome::SucceededEmpty, 0);
        bad.cwe_ids = vec!["CWE_94".into()];
        assert!(bad.check_invariants().is_err());
    }

    #[test]
    fn cwe_pattern() {
        assert!(valid_cwe_id("cwe-094"));
        assert!(valid_cwe_id("cwe-1333"));
        assert!(!valid_cwe_id("cwe-"));
        assert!(!valid_cwe_id("CWE-94"));
        assert!(!valid_cwe_id("cwe-12345"));
        assert!(!valid_cwe_id("94"));
    }

    #[test]
    fn report_counts_mirror_records() {
        let records = vec![
            record(QueryOutcome::SucceededWithResults, 13),
            record(QueryOutcome::SucceededEmpty, 0),
            record(QueryOutcome::Failed, 0),
            record(QueryOutcome::Failed, 0),
        ];
        let report = QReport::from_records("pyyaml-5.3", records);
        assert_eq!(report.counts.succeeded_with_results, 1);
        assert_eq!(report.counts.succeeded_empty, 1);
        assert_eq!(report.counts.failed, 2);
        report.check_invariants().unwrap();
    }

    #[test]
    fn empty_report_has_zero_counts() {
        let report = QReport::from_records("p", vec![]);
        assert_eq!(report.counts.total(), 0);
        report.check_invariants().unwrap();
    }
}
