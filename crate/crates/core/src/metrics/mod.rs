//! Word-overlap (ROUGE-1/2/L) and pathology-label metrics.

mod chexpert;
mod labeler;
mod rouge;
mod score;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use chexpert::{chexpert_compare, is_positive, ChexComparison, ObservationCounts};
pub use labeler::{keyword_label, Lexicon, NEGATION_CUES, NEGATION_WINDOW};
pub use rouge::{lcs_len, rouge_l, rouge_n};
pub use score::{score_all, Metric, ScoreRecord, Scorer, ScoringOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertainPolicy {
    AsPositive,
    AsNegative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    /// Recall weight of the ROUGE-L F-measure.
    pub beta: f64,
    pub uncertain_policy: UncertainPolicy,
    pub lowercase: bool,
    pub strip_punctuation: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            uncertain_policy: UncertainPolicy::AsPositive,
            lowercase: true,
            strip_punctuation: true,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::Config(format!("beta must be > 0, got {}", self.beta)));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex_digest(&json)
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Precision, recall and F-measure, each in `[0, 1]`.
///
/// `degenerate` is set when a denominator was zero and the affected
/// component was defined as 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl Prf {
    pub const PERFECT: Prf = Prf {
        precision: 1.0,
        recall: 1.0,
        f: 1.0,
        degenerate: false,
    };

    /// Builds the triple from a match count and the two totals.
    pub fn from_counts(matches: f64, candidate_total: f64, reference_total: f64, beta: f64) -> Self {
        let mut degenerate = false;
        let precision = if candidate_total > 0.0 {
            matches / candidate_total
        } else {
            degenerate = true;
            0.0
        };
        let recall = if reference_total > 0.0 {
            matches / reference_total
        } else {
            degenerate = true;
            0.0
        };
        // (1 + b^2) P R / (R + b^2 P) rewritten over the raw counts, which
        // keeps exact ratios such as 6/8 exact.
        let b2 = beta * beta;
        let f = if degenerate || matches == 0.0 {
            0.0
        } else {
            (1.0 + b2) * matches / (candidate_total + b2 * reference_total)
        };
        Prf {
            precision,
            recall,
            f,
            degenerate,
        }
    }
}

/// `(1 + b^2) P R / (R + b^2 P)`, or 0 when both are 0.
pub fn f_measure(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = recall + b2 * precision;
    if denom > 0.0 {
        (1.0 + b2) * precision * recall / denom
    } else {
        0.0
    }
}

/// Normalized tokens of one text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new(tokens: Vec<String>) -> Self {
        debug_assert!(tokens.iter().all(|t| !t.is_empty()));
        Self(tokens)
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(
            iter.into_iter()
                .map(Into::into)
                .filter(|t: &String| !t.is_empty())
                .collect(),
        )
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

/// Lowercases, replaces punctuation with spaces and splits on whitespace,
/// each step subject to `config`. No stemming.
pub fn tokenize(text: &str, config: &MetricConfig) -> TokenSeq {
    let lowered;
    let text = if config.lowercase {
        lowered = text.to_lowercase();
        lowered.as_str()
    } else {
        text
    };
    if config.strip_punctuation {
        let cleaned: String = text
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { ' ' })
            .collect();
        cleaned.split_whitespace().collect()
    } else {
        text.split_whitespace().collect()
    }
}

impl FromStr for UncertainPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as_positive" => Ok(Self::AsPositive),
            "as_negative" => Ok(Self::AsNegative),
            other => Err(Error::Config(format!("unknown uncertain policy {other:?}"))),
        }
    }
}
