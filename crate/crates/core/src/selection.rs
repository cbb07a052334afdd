//! Selective optimization: candidate quality ordering, the adjacent-pair
//! margin ranking loss and top-gamma case selection.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Candidate;
use crate::error::{Error, Result};
use crate::labels::LabelVector;
use crate::metrics::{chexpert_compare, keyword_label, rouge_l, tokenize, Scorer};

/// How good a candidate is relative to the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityKey {
    /// ROUGE-L F against the reference.
    pub rouge_component: f64,
    /// Label micro-F1 against the gold labels, when those exist.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chex_component: Option<f64>,
    pub combined: f64,
}

impl QualityKey {
    pub fn new(rouge_component: f64, chex_component: Option<f64>) -> Self {
        let combined = match chex_component {
            Some(c) => (rouge_component + c) / 2.0,
            None => rouge_component,
        };
        Self {
            rouge_component,
            chex_component,
            combined,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    /// Position in the candidate list that was ranked.
    pub index: usize,
    pub model_score: Option<f64>,
    pub quality: QualityKey,
}

/// Candidates best-first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidates {
    pub entries: Vec<RankedEntry>,
}

impl RankedCandidates {
    pub fn order(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.index).collect()
    }
}

/// Sorts candidates by descending quality. Ties fall back to the ROUGE
/// component, then to the original position.
pub fn order_candidates(
    candidates: &[Candidate],
    reference: &str,
    gold: Option<&LabelVector>,
    scorer: &Scorer,
) -> Result<RankedCandidates> {
    if candidates.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "ranking needs at least 2 candidates, got {}",
            candidates.len()
        )));
    }
    let cfg = &scorer.metrics;
    let ref_tokens = tokenize(reference, cfg);
    let mut entries: Vec<RankedEntry> = candidates
        .iter()
        .enumerate()
        .map(|(index, cand)| {
            let rouge = rouge_l(&tokenize(&cand.text, cfg), &ref_tokens, cfg).f;
            let chex = gold.map(|g| {
                let pred = keyword_label(&cand.text, &scorer.lexicon);
                chexpert_compare(&pred, g, cfg).micro.f
            });
            RankedEntry {
                index,
                model_score: cand.model_score,
                quality: QualityKey::new(rouge, chex),
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        b.quality
            .combined
            .total_cmp(&a.quality.combined)
            .then_with(|| b.quality.rouge_component.total_cmp(&a.quality.rouge_component))
            .then_with(|| a.index.cmp(&b.index))
    });
    Ok(RankedCandidates { entries })
}

/// Margins between adjacent ranks: `lambda` everywhere, or `lambda * i` for
/// the pair at rank `i` (1-based) when `proportional` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarginSchedule {
    pub lambda: f64,
    pub proportional: bool,
}

impl Default for MarginSchedule {
    fn default() -> Self {
        Self {
            lambda: 0.001,
            proportional: false,
        }
    }
}

impl MarginSchedule {
    pub fn constant(lambda: f64) -> Self {
        Self {
            lambda,
            proportional: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    /// Margin between ranks `i` and `i + 1`, `i` counted from 1.
    pub fn margin(&self, i: usize) -> f64 {
        if self.proportional {
            self.lambda * i as f64
        } else {
            self.lambda
        }
    }
}

fn check_scores(scores: &[f64]) -> Result<()> {
    if scores.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "ranking needs at least 2 scores, got {}",
            scores.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

fn hinge_args<'a>(scores: &'a [f64], margins: &'a MarginSchedule) -> impl Iterator<Item = f64> + 'a {
    scores
        .windows(2)
        .enumerate()
        .map(move |(i, w)| margins.margin(i + 1) - w[0] + w[1])
}

/// Sum over adjacent pairs of `max(0, margin - score_i + score_{i+1})`, with
/// `scores` listed best candidate first.
pub fn ranking_loss(scores: &[f64], margins: &MarginSchedule) -> Result<f64> {
    check_scores(scores)?;
    Ok(hinge_args(scores, margins).map(|a| a.max(0.0)).sum())
}

/// Gradient of [`ranking_loss`] with respect to each score. Hinges exactly at
/// the kink contribute 0.
pub fn ranking_loss_grad(scores: &[f64], margins: &MarginSchedule) -> Result<Vec<f64>> {
    check_scores(scores)?;
    let mut grad = vec![0.0; scores.len()];
    for (i, arg) in hinge_args(scores, margins).enumerate() {
        if arg > 0.0 {
            grad[i] -= 1.0;
            grad[i + 1] += 1.0;
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Rank cases by cross-entropy alone.
    CeOnly,
    /// Rank cases by cross-entropy plus weighted ranking loss.
    Combined,
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMode::CeOnly => "ce_only",
            SelectionMode::Combined => "combined",
        })
    }
}

impl FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce_only" => Ok(Self::CeOnly),
            "combined" => Ok(Self::Combined),
            other => Err(Error::InvalidArgument(format!(
                "unknown selection mode {other:?} (expected ce_only or combined)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Fraction of each batch kept, in (0, 1].
    pub gamma: f64,
    pub mode: SelectionMode,
    /// Weight on the ranking term of the combined criterion.
    pub ranking_weight: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            mode: SelectionMode::CeOnly,
            ranking_weight: 1.0,
        }
    }
}

impl SelectionConfig {
    pub fn new(gamma: f64, mode: SelectionMode) -> Result<Self> {
        let cfg = Self {
            gamma,
            mode,
            ranking_weight: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must be in (0, 1], got {}", self.gamma)));
        }
        if !(self.ranking_weight.is_finite() && self.ranking_weight >= 0.0) {
            return Err(Error::Config("ranking_weight must be >= 0".into()));
        }
        Ok(())
    }

    /// True when every case is kept and only cross-entropy is used.
    pub fn is_vanilla(&self) -> bool {
        self.gamma == 1.0 && self.mode == SelectionMode::CeOnly
    }
}

/// `ceil(gamma * n)`, clamped to `1..=n`, ignoring float noise below 1e-9
/// (so `0.7 * 10` selects 7, not 8).
pub fn selected_count(gamma: f64, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let x = gamma * n as f64;
    let nearest = x.round();
    let k = if (x - nearest).abs() < 1e-9 { nearest } else { x.ceil() };
    (k as usize).clamp(1, n)
}

/// One batch member's losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossEntry {
    pub case_id: String,
    pub ce: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking: Option<f64>,
}

impl LossEntry {
    pub fn new(case_id: impl Into<String>, ce: f64, ranking: Option<f64>) -> Self {
        Self {
            case_id: case_id.into(),
            ce,
            ranking,
        }
    }
}

/// Positions of the selected entries, highest criterion first. Ties go to the
/// lexicographically smaller `key`.
pub fn select_indices<K: Ord>(
    keys: &[K],
    ce: &[f64],
    ranking: Option<&[f64]>,
    config: &SelectionConfig,
) -> Result<Vec<usize>> {
    config.validate()?;
    if ce.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if keys.len() != ce.len() {
        return Err(Error::LengthMismatch {
            left: keys.len(),
            right: ce.len(),
        });
    }
    let criterion: Vec<f64> = match config.mode {
        SelectionMode::CeOnly => ce.to_vec(),
        SelectionMode::Combined => {
            let ranking = ranking.ok_or_else(|| {
                Error::InvalidArgument("combined selection needs ranking losses".into())
            })?;
            if ranking.len() != ce.len() {
                return Err(Error::LengthMismatch {
                    left: ce.len(),
                    right: ranking.len(),
                });
            }
            ce.iter()
                .zip(ranking)
                .map(|(c, r)| c + config.ranking_weight * r)
                .collect()
        }
    };
    if let Some(i) = criterion.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let mut order: Vec<usize> = (0..ce.len()).collect();
    order.sort_by(|&a, &b| match criterion[b].total_cmp(&criterion[a]) {
        Ordering::Equal => keys[a].cmp(&keys[b]),
        other => other,
    });
    order.truncate(selected_count(config.gamma, ce.len()));
    Ok(order)
}

/// Ids of the top `ceil(gamma * n)` cases by loss.
pub fn select_top_gamma(batch: &[LossEntry], config: &SelectionConfig) -> Result<Vec<String>> {
    let keys: Vec<&str> = batch.iter().map(|e| e.case_id.as_str()).collect();
    let ce: Vec<f64> = batch.iter().map(|e| e.ce).collect();
    let ranking: Option<Vec<f64>> = match config.mode {
        SelectionMode::CeOnly => None,
        SelectionMode::Combined => Some(
            batch
                .iter()
                .map(|e| {
                    e.ranking.ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "case {:?} has no ranking loss (required in combined mode)",
                            e.case_id
                        ))
                    })
                })
                .collect::<Result<_>>()?,
        ),
    };
    let picked = select_indices(&keys, &ce, ranking.as_deref(), config)?;
    Ok(picked.into_iter().map(|i| batch[i].case_id.clone()).collect())
}
