//! Pluggable CVE lookup: a bundled offline snapshot for deterministic scans,
//! or a live HTTP endpoint.

use serde::{Deserialize, Serialize};

use super::SanitizeError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CveMatch {
    pub cve_id: String,
    pub summary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl CveMatch {
    pub fn check_invariants(&self) -> Result<(), String> {
        let ok = self
            .cve_id
            .strip_prefix("CVE-")
            .and_then(|rest| rest.split_once('-'))
            .is_some_and(|(year, seq)| {
                year.len() == 4
                    && year.bytes().all(|b| b.is_ascii_digit())
                    && seq.len() >= 4
                    && seq.bytes().all(|b| b.is_ascii_digit())
            });
        if !ok {
            return Err(format!("'{}' does not match the CVE-YYYY-NNNN pattern", self.cve_id));
        }
        if let Some(score) = self.score {
            if !(0.0..=10.0).contains(&score) {
                return Err(format!("CVSS score {score} outside [0, 10]"));
            }
        }
        Ok(())
    }
}

pub trait CveSource: Send + Sync {
    fn search(&self, terms: &str) -> Result<Vec<CveMatch>, SanitizeError>;
}

/// One snapshot entry: a known CVE plus the keywords it is findable under.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub cve_id: String,
    pub package: String,
    pub summary: String,
    #[serde(default)]
    pub score: Option<f64>,
    #[serde(default)]
    pub keywords: Vec<String>,
}

/// Line-delimited offline snapshot. An entry matches when the query names its
/// CVE id outright or hits at least two distinct indexed terms.
pub struct SnapshotCveSource {
    entries: Vec<SnapshotEntry>,
}

const BUNDLED_SNAPSHOT: &str = include_str!("../../data/cve_snapshot.ndjson");

fn tokenize(text: &str) -> Vec<String> {
    text.to_ascii_lowercase()
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.'))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

impl SnapshotCveSource {
    pub fn bundled() -> Self {
        Self::from_ndjson(BUNDLED_SNAPSHOT).expect("bundled snapshot is well-formed")
    }

    pub fn from_ndjson(text: &str) -> Result<Self, SanitizeError> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: SnapshotEntry = serde_json::from_str(line).map_err(|e| {
                SanitizeError::CveSource(format!("snapshot line {}: {e}", lineno + 1))
            })?;
            entries.push(entry);
        }
        Ok(SnapshotCveSource { entries })
    }

    pub fn entries(&self) -> &[SnapshotEntry] {
        &self.entries
    }

    fn haystack(entry: &SnapshotEntry) -> Vec<String> {
        let mut terms = tokenize(&entry.package);
        terms.extend(tokenize(&entry.summary));
        for k in &entry.keywords {
            terms.extend(tokenize(k));
        }
        terms
    }
}

impl CveSource for SnapshotCveSource {
    fn search(&self, terms: &str) -> Result<Vec<CveMatch>, SanitizeError> {
        let query = tokenize(terms);
        if query.is_empty() {
            return Ok(Vec::new());
        }
        let mut scored: Vec<(usize, &SnapshotEntry)> = Vec::new();
        for entry in &self.entries {
            let id_lower = entry.cve_id.to_ascii_lowercase();
            if query.iter().any(|t| *t == id_lower) {
                scored.push((usize::MAX, entry));
                continue;
            }
            let haystack = Self::haystack(entry);
            let hits = query.iter().filter(|t| haystack.contains(t)).count();
            if hits >= 2 {
                scored.push((hits, entry));
            }
        }
        scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cve_id.cmp(&b.1.cve_id)));
        Ok(scored
            .into_iter()
            .map(|(_, e)| CveMatch { cve_id: e.cve_id.clone(), summary: e.summary.clone(), score: e.score })
            .collect())
    }
}

/// Live endpoint returning a JSON array of matches for `GET {base}?q=<terms>`.
pub struct HttpCveSource {
    client: reqwest::blocking::Client,
    base_url: String,
}

impl HttpCveSource {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpCveSource { client: reqwest::blocking::Client::new(), base_url: base_url.into() }
    }
}

impl CveSource for HttpCveSource {
    fn search(&self, terms: &str) -> Result<Vec<CveMatch>, SanitizeError> {
        let response = self
            .client
            .get(&self.base_url)
            .query(&[("q", terms)])
            .send()
            .map_err(|e| SanitizeError::CveSource(e.to_string()))?;
        if !response.status().is_success() {
            return Err(SanitizeError::CveSource(format!("endpoint returned {}", response.status())));
        }
        response.json().map_err(|e| SanitizeError::CveSource(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_snapshot_loads_and_validates() {
        let source = SnapshotCveSource::bundled();
        assert!(!source.entries().is_empty());
        for entry in source.entries() {
            CveMatch { cve_id: entry.cve_id.clone(), summary: entry.summary.clone(), score: entry.score }
                .check_invariants()
                .unwrap();
        }
    }

    #[test]
    fn pyyaml_keywords_find_the_known_cve() {
        let source = SnapshotCveSource::bundled();
        let matches = source.search("pyyaml unsafe load arbitrary code").unwrap();
        assert!(matches.iter().any(|m| m.cve_id == "CVE-2020-1747"), "got {matches:?}");
    }

    #[test]
    fn nonsense_query_matches_nothing() {
        let source = SnapshotCveSource::bundled();
        assert!(source.search("xyzzy plugh frobnicate").unwrap().is_empty());
        assert!(source.search("").unwrap().is_empty());
    }

    #[test]
    fn every_entry_is_findable_by_its_own_id() {
        let source = SnapshotCveSource::bundled();
        for entry in source.entries() {
            let matches = source.search(&entry.cve_id).unwrap();
            assert!(
                matches.iter().any(|m| m.cve_id == entry.cve_id),
                "{} not findable by its own id",
                entry.cve_id
            );
        }
    }

    #[test]
    fn cve_id_pattern_enforced() {
        let good = CveMatch { cve_id: "CVE-2020-1747".into(), summary: String::new(), score: None };
        assert!(good.check_invariants().is_ok());
        let bad = CveMatch { cve_id: "cve-2020-1747".into(), summary: String::new(), score: None };
        assert!(bad.check_invariants().is_err());
        let bad = CveMatch { cve_id: "CVE-20-1747".into(), summary: String::new(), score: None };
        assert!(bad.check_invariants().is_err());
    }
}
