//! Sanitization verdict schema: recommendation, multi-label flags, reasoning.

use serde::{Deserialize, Serialize};

use crate::ragent::finding::Verdict;
use crate::severity::Severity;

/// Closed flag taxonomy; unknown labels are rejected at parse time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FlagType {
    KnownCve,
    ZeroDay,
    NovelFinding,
    BuildScript,
    TestCode,
    Exploitability,
    Hallucination,
    CodeSmell,
    ContextMismatch,
}

impl FlagType {
    pub const ALL: [FlagType; 9] = [
        FlagType::KnownCve,
        FlagType::ZeroDay,
        FlagType::NovelFinding,
        FlagType::BuildScript,
        FlagType::TestCode,
        FlagType::Exploitability,
        FlagType::Hallucination,
        FlagType::CodeSmell,
        FlagType::ContextMismatch,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recommendation {
    Accept,
    Reject,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    #[serde(rename = "type")]
    pub flag_type: FlagType,
    pub severity: Severity,
    pub message: String,
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanitizationCheck {
    pub verdict: Verdict,
    pub confidence: u8,
    pub recommendation: Recommendation,
    pub concerns: bool,
    pub flags: Vec<Flag>,
    pub reasoning: String,
}

/// Shape the model actually returns: flag severity may be omitted, in which
/// case it mirrors the finding's severity.
#[derive(Debug, Clone, Deserialize)]
pub struct RawCheck {
    pub verdict: Verdict,
    pub confidence: u8,
    pub recommendation: Recommendation,
    #[serde(default)]
    pub concerns: bool,
    #[serde(default)]
    pub flags: Vec<RawFlag>,
    pub reasoning: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RawFlag {
    #[serde(rename = "type")]
    pub flag_type: FlagType,
    pub severity: Option<Severity>,
    #[serde(default)]
    pub message: String,
    #[serde(default)]
    pub evidence: String,
}

impl RawCheck {
    /// Normalize into the final schema, defaulting flag severities to the
    /// finding's. The confidence band for acceptance is enforced here: an
    /// accept below 70 is a schema violation.
    pub fn normalize(self, finding_severity: Severity) -> Result<SanitizationCheck, String> {
        if self.confidence > 100 {
            return Err(format!("confidence {} exceeds 100", self.confidence));
        }
        if self.recommendation == Recommendation::Accept && self.confidence < 70 {
            return Err(format!(
                "recommendation 'accept' requires confidence >= 70, got {}",
                self.confidence
            ));
        }
        Ok(SanitizationCheck {
            verdict: self.verdict,
            confidence: self.confidence,
            recommendation: self.recommendation,
            concerns: self.concerns,
            flags: self
                .flags
                .into_iter()
                .map(|f| Flag {
                    flag_type: f.flag_type,
                    severity: f.severity.unwrap_or(finding_severity),
                    message: f.message,
                    evidence: f.evidence,
                })
                .collect(),
            reasoning: self.reasoning,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_labels_serialize_screaming_snake() {
        assert_eq!(serde_json::to_string(&FlagType::KnownCve).unwrap(), "\"KNOWN_CVE\"");
        assert_eq!(serde_json::to_string(&FlagType::ZeroDay).unwrap(), "\"ZERO_DAY\"");
        assert_eq!(serde_json::to_string(&FlagType::TestCode).unwrap(), "\"TEST_CODE\"");
    }

    #[test]
    fn unknown_flag_labels_are_rejected_at_parse_time() {
        let err = serde_json::from_str::<FlagType>("\"TOTALLY_NEW\"");
        assert!(err.is_err());
    }

    #[test]
    fn accept_below_seventy_is_rejected() {
        let raw: RawCheck = serde_json::from_str(
            r#"{"verdict":"tp","confidence":65,"recommendation":"accept","concerns":false,"flags":[],"reasoning":"r"}"#,
        )
        .unwrap();
        assert!(raw.normalize(Severity::High).is_err());
    }

    #[test]
    fn flag_severity_defaults_to_finding_severity() {
        let raw: RawCheck = serde_json::from_str(
            r#"{"verdict":"tp","confidence":92,"recommendation":"accept","concerns":false,
                "flags":[{"type":"ZERO_DAY","message":"m","evidence":"e"}],"reasoning":"r"}"#,
        )
        .unwrap();
        let check = raw.normalize(Severity::Critical).unwrap();
        assert_eq!(check.flags[0].severity, Severity::Critical);
    }

    #[test]
    fn check_serializes_with_listing_field_names() {
        let check = SanitizationCheck {
            verdict: Verdict::Tp,
            confidence: 92,
            recommendation: Recommendation::Accept,
            concerns: false,
            flags: vec![Flag {
                flag_type: FlagType::ZeroDay,
                severity: Severity::Critical,
                message: "m".into(),
                evidence: "e".into(),
            }],
            reasoning: "fine".into(),
        };
        let json = serde_json::to_value(&check).unwrap();
        for key in ["verdict", "confidence", "recommendation", "concerns", "flags", "reasoning"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["flags"][0]["type"], "ZERO_DAY");
        for key in ["type", "severity", "message", "evidence"] {
            assert!(json["flags"][0].get(key).is_some(), "missing flag key {key}");
        }
        assert_eq!(json["recommendation"], "accept");
    }
}
