//! Taxonomy-driven clustering and minification of raw query results.
//!
//! Raw results pivot from per-file locations into weakness groups: each
//! result is assigned to the cluster keyed by its record's primary (first
//! listed) CWE, and clusters whose primary CWEs are related merge under
//! transitive closure. Minification then collapses location and flow
//! duplicates; the review budget is 10x the minified result count.

use serde::{Deserialize, Serialize};

use crate::codeql::{QueryOutcome, QueryRecord, RawResult};

use super::cwe::CweTable;

pub const BUDGET_FACTOR: u32 = 10;

/// A raw result plus the query that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteredResult {
    pub query_id: String,
    pub result: RawResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingCluster {
    /// `<severity>_<likelihood>_<prevalence>` of the primary CWE.
    pub key: String,
    pub query_ids: Vec<String>,
    pub results: Vec<ClusteredResult>,
    pub related_cwe_ids: Vec<String>,
    pub budget: u32,
}

impl FindingCluster {
    fn recompute_budget(&mut self, factor: u32) {
        self.budget = factor * self.results.len() as u32;
    }
}

struct ProtoCluster {
    primary_cwe: String,
    first_record_index: usize,
    query_ids: Vec<String>,
    results: Vec<ClusteredResult>,
    cwe_ids: Vec<String>,
}

/// Group results from successful records into CWE-taxonomy clusters.
///
/// The output partitions the input: every raw result lands in exactly one
/// cluster. Unknown CWE ids are handled by the table's fallback entry.
pub fn group_findings_by_mitre(
    inputs: &[(QueryRecord, Vec<RawResult>)],
    cwe_table: &CweTable,
) -> Vec<FindingCluster> {
    group_findings_with_factor(inputs, cwe_table, BUDGET_FACTOR)
}

pub fn group_findings_with_factor(
    inputs: &[(QueryRecord, Vec<RawResult>)],
    cwe_table: &CweTable,
    budget_factor: u32,
) -> Vec<FindingCluster> {
    // One proto-cluster per distinct primary CWE, in record order.
    let mut protos: Vec<ProtoCluster> = Vec::new();
    for (index, (record, results)) in inputs.iter().enumerate() {
        if record.outcome != QueryOutcome::SucceededWithResults {
            continue;
        }
        let Some(primary) = record.cwe_ids.first() else { continue };
        let proto = match protos.iter_mut().find(|p| &p.primary_cwe == primary) {
            Some(p) => p,
            None => {
                protos.push(ProtoCluster {
                    primary_cwe: primary.clone(),
                    first_record_index: index,
                    query_ids: Vec::new(),
                    results: Vec::new(),
                    cwe_ids: Vec::new(),
                });
                protos.last_mut().expect("just pushed")
            }
        };
        if !proto.query_ids.contains(&record.query_id) {
            proto.query_ids.push(record.query_id.clone());
        }
        for id in &record.cwe_ids {
            if !proto.cwe_ids.contains(id) {
                proto.cwe_ids.push(id.clone());
            }
        }
        proto.results.extend(results.iter().map(|r| ClusteredResult {
            query_id: record.query_id.clone(),
            result: r.clone(),
        }));
    }

    // Transitive closure over primary-CWE relatedness (union-find).
    let n = protos.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if cwe_table.related(&protos[i].primary_cwe, &protos[j].primary_cwe) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    // Earlier record index wins the root so output stays in
                    // execution order.
                    let (keep, merge) = if protos[ri].first_record_index <= protos[rj].first_record_index {
                        (ri, rj)
                    } else {
                        (rj, ri)
                    };
                    parent[merge] = keep;
                }
            }
        }
    }

    let mut clusters: Vec<(usize, FindingCluster)> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        let root_primary = protos[root].primary_cwe.clone();
        let member = &protos[i];
        let entry = clusters.iter_mut().find(|(r, _)| *r == root);
        let cluster = match entry {
            Some((_, c)) => c,
            None => {
                clusters.push((
                    root,
                    FindingCluster {
                        key: cwe_table.get(&root_primary).attribute_key(),
                        query_ids: Vec::new(),
                        results: Vec::new(),
                        related_cwe_ids: Vec::new(),
                        budget: 0,
                    },
                ));
                &mut clusters.last_mut().expect("just pushed").1
            }
        };
        for q in &member.query_ids {
            if !cluster.query_ids.contains(q) {
                cluster.query_ids.push(q.clone());
            }
        }
        for id in &member.cwe_ids {
            if !cluster.related_cwe_ids.contains(id) {
                cluster.related_cwe_ids.push(id.clone());
            }
        }
        cluster.results.extend(member.results.iter().cloned());
    }

    clusters.sort_by_key(|(root, _)| protos[*root].first_record_index);
    let mut out: Vec<FindingCluster> = clusters.into_iter().map(|(_, c)| c).collect();
    for cluster in &mut out {
        cluster.related_cwe_ids.sort();
        cluster.recompute_budget(budget_factor);
    }
    out
}

/// Projection used for duplicate detection: location lists reduce to their
/// `(uri, start_line)` pairs, flows to their step location sequences.
fn location_key(result: &RawResult) -> Vec<(String, u64)> {
    result.locations.iter().map(|l| (l.uri.clone(), l.start_line)).collect()
}

fn flow_key(result: &RawResult) -> Vec<Vec<(String, u64)>> {
    result
        .code_flows
        .iter()
        .flatten()
        .map(|flow| flow.steps.iter().map(|s| (s.location.uri.clone(), s.location.start_line)).collect())
        .collect()
}

fn minify_result(result: &RawResult) -> RawResult {
    let mut seen = Vec::new();
    let mut locations = Vec::new();
    for loc in &result.locations {
        let key = (loc.uri.clone(), loc.start_line);
        if !seen.contains(&key) {
            seen.push(key);
            locations.push(loc.clone());
        }
    }
    let code_flows = result.code_flows.as_ref().map(|flows| {
        let mut keys: Vec<Vec<(String, u64)>> = Vec::new();
        let mut kept = Vec::new();
        for flow in flows {
            let key: Vec<(String, u64)> =
                flow.steps.iter().map(|s| (s.location.uri.clone(), s.location.start_line)).collect();
            if !keys.contains(&key) {
                keys.push(key);
                kept.push(flow.clone());
            }
        }
        kept
    });
    RawResult {
        rule_id: result.rule_id.clone(),
        message: result.message.clone(),
        locations,
        code_flows,
    }
}

/// Collapse duplicate locations and identical code flows, preserving result
/// order. Idempotent. The budget is recomputed from the minified count.
pub fn minify_cluster(cluster: &FindingCluster) -> FindingCluster {
    minify_cluster_with_factor(cluster, BUDGET_FACTOR)
}

pub fn minify_cluster_with_factor(cluster: &FindingCluster, budget_factor: u32) -> FindingCluster {
    let mut seen: Vec<(Vec<(String, u64)>, Vec<Vec<(String, u64)>>)> = Vec::new();
    let mut results = Vec::new();
    for clustered in &cluster.results {
        let minified = minify_result(&clustered.result);
        let key = (location_key(&minified), flow_key(&minified));
        if !seen.contains(&key) {
            seen.push(key);
            results.push(ClusteredResult { query_id: clustered.query_id.clone(), result: minified });
        }
    }
    let mut out = FindingCluster {
        key: cluster.key.clone(),
        query_ids: cluster.query_ids.clone(),
        results,
        related_cwe_ids: cluster.related_cwe_ids.clone(),
        budget: 0,
    };
    out.recompute_budget(budget_factor);
    out
}
