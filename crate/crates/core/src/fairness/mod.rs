//! Group-level comparison: MFD, significance testing, confidence intervals
//! and run-to-run comparison.

mod compare;
mod report;
pub mod stats;

pub use compare::{
    compare_runs, reduction_pct, relative_change_pct, ComparisonRow, ComparisonTable, CSV_HEADER,
};
pub use report::{
    fairness_report, FairnessReport, GroupSummary, MetricSummary, PairwiseResult, ReportConfig,
    TestSides,
};
pub use stats::{
    bootstrap_ci, mann_whitney_u, mann_whitney_u_with, mfd, pearson, Alternative, Correlation,
    MannWhitney, PMethod, Stars,
};
