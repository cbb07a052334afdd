//! Fairness evaluation and bias mitigation for generated text.
//!
//! - [`metrics`] scores generated text against references (ROUGE-1/2/L and
//!   label agreement over 14 chest-radiograph observations).
//! - [`fairness`] compares groups of cases: metric-aware fairness difference,
//!   Mann-Whitney tests, bootstrap intervals and before/after comparisons.
//! - [`selection`] holds the training-time rule: candidate ranking loss and
//!   top-gamma case selection.
//! - [`toymodel`] is a small trainable generator used to run the whole loop
//!   on synthetic, deliberately biased corpora.

pub mod corpus;
pub mod error;
pub mod fairness;
pub mod labels;
pub mod metrics;
pub mod parallel;
pub mod selection;
pub mod toymodel;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
