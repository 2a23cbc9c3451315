//! Precision, recall, average precision over the global candidate list, and
//! mean average precision over per-issue queries. AP and MAP are reported
//! on a 0-100 scale.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::GroundTruth;
use crate::error::{Error, Result};
use crate::retrieval::RankedLink;

/// Precision and recall of the top `r` links.
pub fn precision_recall_at(ranked: &[RankedLink], truth: &GroundTruth, r: usize) -> Result<(f64, f64)> {
    if r == 0 || r > ranked.len() {
        return Err(Error::Evaluation(format!("cutoff {r} outside 1..={}", ranked.len())));
    }
    if truth.is_empty() {
        return Err(Error::Evaluation("recall is undefined without true links".into()));
    }
    let hits = ranked[..r]
        .iter()
        .filter(|l| truth.contains(&l.issue_id, &l.commit_id))
        .count();
    Ok((hits as f64 / r as f64, hits as f64 / truth.len() as f64))
}

/// Σ precision(r) · relevant(r) / n_true, times 100.
pub fn ap_from_relevance(relevant: impl IntoIterator<Item = bool>, n_true: usize) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, rel) in relevant.into_iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    100.0 * sum / n_true as f64
}

pub fn average_precision(ranked: &[RankedLink], truth: &GroundTruth) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::Evaluation(
            "average precision is undefined without true links".into(),
        ));
    }
    Ok(ap_from_relevance(
        ranked.iter().map(|l| truth.contains(&l.issue_id, &l.commit_id)),
        truth.len(),
    ))
}

/// Splits a globally ranked list into per-issue candidate lists, keeping the
/// global order (similarity descending, then commit id).
pub fn per_issue_rankings(ranked: &[RankedLink]) -> BTreeMap<String, Vec<RankedLink>> {
    let mut out: BTreeMap<String, Vec<RankedLink>> = BTreeMap::new();
    for l in ranked {
        out.entry(l.issue_id.clone()).or_default().push(l.clone());
    }
    for list in out.values_mut() {
        for (i, l) in list.iter_mut().enumerate() {
            l.rank = i + 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    pub map: f64,
    pub per_query_ap: BTreeMap<String, f64>,
    /// Issues without any true link.
    pub excluded: Vec<String>,
}

/// Mean of per-issue AP over issues with at least one true link.
pub fn mean_average_precision(rankings: &BTreeMap<String, Vec<RankedLink>>, truth: &GroundTruth) -> Result<MapResult> {
    let mut per_query_ap = BTreeMap::new();
    let mut excluded = Vec::new();
    for (issue, list) in rankings {
        let n_true = truth.links_for_issue(issue);
        if n_true == 0 {
            excluded.push(issue.clone());
            continue;
        }
        let ap = ap_from_relevance(list.iter().map(|l| truth.contains(&l.issue_id, &l.commit_id)), n_true);
        per_query_ap.insert(issue.clone(), ap);
    }
    if per_query_ap.is_empty() {
        return Err(Error::Evaluation("no issue has a true link; MAP is undefined".into()));
    }
    let map = per_query_ap.values().sum::<f64>() / per_query_ap.len() as f64;
    Ok(MapResult {
        map,
        per_query_ap,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub project: String,
    pub mode: String,
    pub global_ap: f64,
    pub map: f64,
    pub per_query_ap: BTreeMap<String, f64>,
    pub excluded_queries: Vec<String>,
    pub true_links: usize,
    pub candidates: usize,
}

#[derive(Serialize, Deserialize)]
struct MetricsJson {
    project: String,
    mode: String,
    ap: f64,
    map: f64,
    per_query_ap: BTreeMap<String, f64>,
    excluded_queries: Vec<String>,
}

/// Rounds to the two decimals used in reports.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

impl MetricsReport {
    pub fn compute(project: &str, mode: &str, ranked: &[RankedLink], truth: &GroundTruth) -> Result<Self> {
        let global_ap = average_precision(ranked, truth)?;
        let m = mean_average_precision(&per_issue_rankings(ranked), truth)?;
        Ok(MetricsReport {
            project: project.to_string(),
            mode: mode.to_string(),
            global_ap,
            map: m.map,
            per_query_ap: m.per_query_ap,
            excluded_queries: m.excluded,
            true_links: truth.len(),
            candidates: ranked.len(),
        })
    }

    pub fn to_json(&self) -> String {
        let j = MetricsJson {
            project: self.project.clone(),
            mode: self.mode.clone(),
            ap: round2(self.global_ap),
            map: round2(self.map),
            per_query_ap: self.per_query_ap.iter().map(|(k, v)| (k.clone(), round2(*v))).collect(),
            excluded_queries: self.excluded_queries.clone(),
        };
        let mut s = serde_json::to_string_pretty(&j).expect("metrics serialize");
        s.push('\n');
        s
    }

    /// Reads a metrics JSON file back (values carry the reported rounding).
    pub fn from_json(text: &str, origin: &std::path::Path) -> Result<Self> {
        let j: MetricsJson = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: Some(e.line()),
            column: Some(e.column()),
            message: e.to_string(),
        })?;
        Ok(MetricsReport {
            project: j.project,
            mode: j.mode,
            global_ap: j.ap,
            map: j.map,
            per_query_ap: j.per_query_ap,
            excluded_queries: j.excluded_queries,
            true_links: 0,
            candidates: 0,
        })
    }
}
