//! CWE attribute table driving taxonomy clustering.
//!
//! Ships as a bundled data file covering the weakness categories the pipeline
//! most often reports, plus a fallback entry for ids outside the table, so
//! scans never need network access to the taxonomy source.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::severity::Severity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Likelihood {
    Rarely,
    Sometimes,
    Often,
}

impl Likelihood {
    pub fn as_str(self) -> &'static str {
        match self {
            Likelihood::Rarely => "rarely",
            Likelihood::Sometimes => "sometimes",
            Likelihood::Often => "often",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prevalence {
    Low,
    Medium,
    High,
}

impl Prevalence {
    pub fn as_str(self) -> &'static str {
        match self {
            Prevalence::Low => "low",
            Prevalence::Medium => "medium",
            Prevalence::High => "high",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CweEntry {
    pub id: String,
    pub name: String,
    pub base_severity: Severity,
    pub likelihood: Likelihood,
    pub prevalence: Prevalence,
    #[serde(default)]
    pub related_ids: Vec<String>,
}

impl CweEntry {
    /// Cluster key attribute triple: `<severity>_<likelihood>_<prevalence>`.
    pub fn attribute_key(&self) -> String {
        format!(
            "{}_{}_{}",
            self.base_severity.as_str(),
            self.likelihood.as_str(),
            self.prevalence.as_str()
        )
    }
}

#[derive(Debug, Deserialize)]
struct CweTableFile {
    entries: Vec<CweEntry>,
}

#[derive(Debug, Clone)]
pub struct CweTable {
    entries: BTreeMap<String, CweEntry>,
}

const BUNDLED_TABLE: &str = include_str!("../../data/cwe_taxonomy.json");

impl CweTable {
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_TABLE).expect("bundled taxonomy file is well-formed")
    }

    /// The related relation is symmetrized on load.
    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        let file: CweTableFile = serde_json::from_str(json)?;
        let mut entries: BTreeMap<String, CweEntry> =
            file.entries.into_iter().map(|e| (e.id.clone(), e)).collect();
        let pairs: Vec<(String, String)> = entries
            .values()
            .flat_map(|e| e.related_ids.iter().map(|r| (r.clone(), e.id.clone())))
            .collect();
        for (target, source) in pairs {
            if let Some(entry) = entries.get_mut(&target) {
                if !entry.related_ids.contains(&source) {
                    entry.related_ids.push(source);
                }
            }
        }
        for entry in entries.values_mut() {
            entry.related_ids.sort();
        }
        Ok(CweTable { entries })
    }

    pub fn from_entries(list: Vec<CweEntry>) -> Self {
        let file = CweTableFile { entries: list };
        let json = serde_json::to_string(&serde_json::json!({
            "entries": file.entries
        }))
        .expect("entries serialize");
        Self::from_json(&json).expect("entries reparse")
    }

    /// Unknown ids fall back to a medium/sometimes/medium entry with no
    /// relations, carrying the requested id.
    pub fn get(&self, id: &str) -> CweEntry {
        self.entries.get(id).cloned().unwrap_or_else(|| CweEntry {
            id: id.to_string(),
            name: "Unclassified weakness".to_string(),
            base_severity: Severity::Medium,
            likelihood: Likelihood::Sometimes,
            prevalence: Prevalence::Medium,
            related_ids: Vec::new(),
        })
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    /// Direct relatedness, symmetric by construction.
    pub fn related(&self, a: &str, b: &str) -> bool {
        self.get(a).related_ids.iter().any(|r| r == b) || self.get(b).related_ids.iter().any(|r| r == a)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_table_loads_and_is_symmetric() {
        let table = CweTable::bundled();
        for id in table.ids() {
            let entry = table.get(id);
            for rel in &entry.related_ids {
                assert!(
                    table.related(rel, id),
                    "relation {id} -> {rel} is not symmetric"
                );
            }
        }
    }

    #[test]
    fn code_injection_and_deserialization_share_the_critical_often_medium_key() {
        let table = CweTable::bundled();
        assert_eq!(table.get("cwe-094").attribute_key(), "critical_often_medium");
        assert_eq!(table.get("cwe-502").attribute_key(), "critical_often_medium");
        assert!(table.related("cwe-094", "cwe-502"));
    }

    #[test]
    fn unknown_ids_use_the_fallback_triple() {
        let table = CweTable::bundled();
        let entry = table.get("cwe-9999");
        assert_eq!(entry.attribute_key(), "medium_sometimes_medium");
        assert_eq!(entry.id, "cwe-9999");
        assert!(entry.related_ids.is_empty());
    }
}
