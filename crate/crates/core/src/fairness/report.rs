use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::stats::{
    bootstrap_ci, derive_seed, mann_whitney_u, mean, mfd, Alternative, Stars, DEFAULT_RESAMPLES,
};
use crate::corpus::{partition, Case, CaseSet, GroupKey, GroupSpec};
use crate::error::{Error, Result};
use crate::metrics::{Metric, ScoreRecord};
use crate::parallel::{self, Exec};

/// Sidedness of the group comparison test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSides {
    #[default]
    TwoSided,
    /// Tests whether the higher-mean group scores higher.
    OneSided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub sides: TestSides,
    pub resamples: usize,
    pub seed: u64,
    /// Metrics to compare; `None` means ROUGE always, label metrics when
    /// every record carries them.
    pub metrics: Option<Vec<Metric>>,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            sides: TestSides::TwoSided,
            resamples: DEFAULT_RESAMPLES,
            seed: 0,
            metrics: None,
            exec: Exec::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub key: GroupKey,
    pub n: usize,
    pub metrics: BTreeMap<Metric, MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseResult {
    pub group_a: GroupKey,
    pub group_b: GroupKey,
    pub metric: Metric,
    pub mfd: f64,
    /// U statistic of `group_a`.
    pub u_statistic: f64,
    pub p_value: f64,
    pub alternative: TestSides,
    pub stars: Stars,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub spec: GroupSpec,
    pub fingerprint: String,
    pub seed: u64,
    pub resamples: usize,
    pub metrics: Vec<Metric>,
    /// Mean of each metric over every scored case.
    pub overall: BTreeMap<Metric, f64>,
    pub unassigned: usize,
    pub summaries: Vec<GroupSummary>,
    pub pairwise: Vec<PairwiseResult>,
    /// Unweighted mean of every pairwise MFD.
    pub average_mfd: f64,
}

impl FairnessReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn pair(&self, metric: Metric, a: &GroupKey, b: &GroupKey) -> Option<&PairwiseResult> {
        self.pairwise
            .iter()
            .find(|p| p.metric == metric && p.group_a == *a && p.group_b == *b)
    }

    pub fn summary(&self, key: &GroupKey) -> Option<&GroupSummary> {
        self.summaries.iter().find(|s| s.key == *key)
    }
}

fn resolve_metrics(records: &[&ScoreRecord], requested: Option<&[Metric]>) -> Result<Vec<Metric>> {
    let all_have_labels = records.iter().all(|r| r.chex.is_some());
    match requested {
        Some(list) => {
            if list.is_empty() {
                return Err(Error::Config("metric list is empty".into()));
            }
            if let Some(m) = list.iter().find(|m| m.is_label_metric() && !all_have_labels) {
                return Err(Error::InvalidArgument(format!(
                    "metric {m} requested but some cases have no label scores"
                )));
            }
            Ok(list.to_vec())
        }
        None if all_have_labels => Ok(Metric::ALL.to_vec()),
        None => Ok(Metric::ROUGE.to_vec()),
    }
}

/// Builds per-group summaries and pairwise comparisons for every metric.
///
/// Only cases with a score record take part in grouping. `fingerprint`
/// identifies the scoring configuration that produced `scores`.
pub fn fairness_report(
    scores: &[ScoreRecord],
    cases: &CaseSet,
    spec: &GroupSpec,
    fingerprint: &str,
    config: &ReportConfig,
) -> Result<FairnessReport> {
    if scores.is_empty() {
        return Err(Error::Empty("score records"));
    }
    let mut by_id: HashMap<&str, &ScoreRecord> = HashMap::with_capacity(scores.len());
    for record in scores {
        if cases.get(&record.case_id).is_none() {
            return Err(Error::InvalidArgument(format!(
                "score record {:?} has no matching case",
                record.case_id
            )));
        }
        if by_id.insert(record.case_id.as_str(), record).is_some() {
            return Err(Error::DuplicateId(record.case_id.clone()));
        }
    }
    let scored: Vec<Case> = cases
        .iter()
        .filter(|c| by_id.contains_key(c.id.as_str()))
        .cloned()
        .collect();
    let scored = CaseSet::new(scored, cases.provenance())?;
    let parts = partition(&scored, spec)?;
    for (key, ids) in &parts.groups {
        if ids.len() < 2 {
            return Err(Error::GroupTooSmall {
                group: key.to_string(),
                size: ids.len(),
                required: 2,
            });
        }
    }

    let all_records: Vec<&ScoreRecord> = scored.iter().map(|c| by_id[c.id.as_str()]).collect();
    let metrics = resolve_metrics(&all_records, config.metrics.as_deref())?;
    let column = |ids: &[String], metric: Metric| -> Vec<f64> {
        ids.iter()
            .map(|id| metric.value(by_id[id.as_str()]).expect("metric resolved for every record"))
            .collect()
    };

    let groups: Vec<(&GroupKey, &Vec<String>)> = parts.groups.iter().collect();
    let cells: Vec<(usize, usize)> = (0..groups.len())
        .flat_map(|g| (0..metrics.len()).map(move |m| (g, m)))
        .collect();
    let cell_stats = parallel::map(&cells, config.exec, |&(g, m)| -> Result<MetricSummary> {
        let values = column(groups[g].1, metrics[m]);
        let seed = derive_seed(config.seed, &[g as u64, m as u64]);
        let (low, high) = bootstrap_ci(&values, config.resamples, seed, Exec::Sequential)?;
        let mean = mean(&values);
        Ok(MetricSummary {
            mean,
            ci_low: low.min(mean),
            ci_high: high.max(mean),
        })
    });
    let mut summaries: Vec<GroupSummary> = groups
        .iter()
        .map(|(key, ids)| GroupSummary {
            key: (*key).clone(),
            n: ids.len(),
            metrics: BTreeMap::new(),
        })
        .collect();
    for (&(g, m), stat) in cells.iter().zip(cell_stats) {
        summaries[g].metrics.insert(metrics[m], stat?);
    }

    let mut pairwise = Vec::new();
    for &metric in &metrics {
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                let a = column(groups[i].1, metric);
                let b = column(groups[j].1, metric);
                let alternative = match config.sides {
                    TestSides::TwoSided => Alternative::TwoSided,
                    TestSides::OneSided if mean(&a) >= mean(&b) => Alternative::Greater,
                    TestSides::OneSided => Alternative::Less,
                };
                let test = mann_whitney_u(&a, &b, alternative)?;
                pairwise.push(PairwiseResult {
                    group_a: groups[i].0.clone(),
                    group_b: groups[j].0.clone(),
                    metric,
                    mfd: mfd(&a, &b)?,
                    u_statistic: test.u,
                    p_value: test.p,
                    alternative: config.sides,
                    stars: Stars::from_p(test.p),
                });
            }
        }
    }
    let average_mfd = if pairwise.is_empty() {
        0.0
    } else {
        pairwise.iter().map(|p| p.mfd).sum::<f64>() / pairwise.len() as f64
    };
    let overall = metrics
        .iter()
        .map(|&m| {
            let values: Vec<f64> = all_records.iter().filter_map(|r| m.value(r)).collect();
            (m, mean(&values))
        })
        .collect();

    Ok(FairnessReport {
        spec: spec.clone(),
        fingerprint: fingerprint.to_string(),
        seed: config.seed,
        resamples: config.resamples,
        metrics,
        overall,
        unassigned: parts.unassigned.len(),
        summaries,
        pairwise,
        average_mfd,
    })
}
