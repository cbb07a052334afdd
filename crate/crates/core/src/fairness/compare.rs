use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::report::FairnessReport;
use crate::error::{Error, Result};
use crate::metrics::Metric;

pub const CSV_HEADER: &str = "metric,group_a,group_b,mfd_base,mfd_treated,reduction_pct";

/// `(base - treated) / base * 100`, or `None` when `base` is 0.
pub fn reduction_pct(base: f64, treated: f64) -> Option<f64> {
    (base != 0.0).then(|| (base - treated) / base * 100.0)
}

/// `(treated - base) / base * 100`, or `None` when `base` is 0.
pub fn relative_change_pct(base: f64, treated: f64) -> Option<f64> {
    (base != 0.0).then(|| (treated - base) / base * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: Metric,
    pub group_a: String,
    pub group_b: String,
    pub mfd_base: f64,
    pub mfd_treated: f64,
    /// `None` when the baseline gap is zero.
    pub reduction_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    /// Relative change of each metric's overall mean, in percent.
    pub overall_change_pct: BTreeMap<Metric, Option<f64>>,
    pub average_mfd_base: f64,
    pub average_mfd_treated: f64,
    pub average_mfd_reduction_pct: Option<f64>,
}

fn csv_field(out: &mut String, field: &str) {
    if field.contains([',', '"', '\n']) {
        out.push('"');
        out.push_str(&field.replace('"', "\"\""));
        out.push('"');
    } else {
        out.push_str(field);
    }
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            csv_field(&mut out, row.metric.name());
            out.push(',');
            csv_field(&mut out, &row.group_a);
            out.push(',');
            csv_field(&mut out, &row.group_b);
            let reduction = row
                .reduction_pct
                .map_or_else(|| "NA".to_string(), |r| r.to_string());
            let _ = writeln!(out, ",{},{},{}", row.mfd_base, row.mfd_treated, reduction);
        }
        out
    }
}

/// Per-pair MFD reductions and overall performance change between two
/// reports over the same grouping and scoring configuration.
pub fn compare_runs(baseline: &FairnessReport, treated: &FairnessReport) -> Result<ComparisonTable> {
    if baseline.spec != treated.spec {
        return Err(Error::Incomparable(format!(
            "group specs differ ({} vs {})",
            baseline.spec, treated.spec
        )));
    }
    if baseline.fingerprint != treated.fingerprint {
        return Err(Error::Incomparable("metric configuration fingerprints differ".into()));
    }
    let mut rows = Vec::with_capacity(baseline.pairwise.len());
    for base in &baseline.pairwise {
        let other = treated
            .pair(base.metric, &base.group_a, &base.group_b)
            .ok_or_else(|| {
                Error::Incomparable(format!(
                    "treated report lacks {} for {} vs {}",
                    base.metric, base.group_a, base.group_b
                ))
            })?;
        rows.push(ComparisonRow {
            metric: base.metric,
            group_a: base.group_a.to_string(),
            group_b: base.group_b.to_string(),
            mfd_base: base.mfd,
            mfd_treated: other.mfd,
            reduction_pct: reduction_pct(base.mfd, other.mfd),
        });
    }
    let overall_change_pct = baseline
        .overall
        .iter()
        .map(|(m, base)| {
            let change = treated
                .overall
                .get(m)
                .and_then(|t| relative_change_pct(*base, *t));
            (*m, change)
        })
        .collect();
    Ok(ComparisonTable {
        rows,
        overall_change_pct,
        average_mfd_base: baseline.average_mfd,
        average_mfd_treated: treated.average_mfd,
        average_mfd_reduction_pct: reduction_pct(baseline.average_mfd, treated.average_mfd),
    })
}
