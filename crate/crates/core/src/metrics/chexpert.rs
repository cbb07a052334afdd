use serde::{Deserialize, Serialize};

use super::{MetricConfig, Prf, UncertainPolicy};
use crate::labels::{LabelState, LabelVector, Observation};

/// Whether a state counts as a positive finding. Blank counts as negative.
pub fn is_positive(state: LabelState, policy: UncertainPolicy) -> bool {
    match state {
        LabelState::Positive => true,
        LabelState::Uncertain => policy == UncertainPolicy::AsPositive,
        LabelState::Negative | LabelState::Blank => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ObservationCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ObservationCounts {
    pub fn prf(&self) -> Prf {
        Prf::from_counts(
            self.tp as f64,
            (self.tp + self.fp) as f64,
            (self.tp + self.fn_) as f64,
            1.0,
        )
    }
}

/// Micro-averaged label agreement plus the per-observation breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChexComparison {
    pub micro: Prf,
    pub totals: ObservationCounts,
    pub per_observation: Vec<(Observation, ObservationCounts)>,
}

/// Compares predicted against gold labels over all 14 observations.
pub fn chexpert_compare(
    pred: &LabelVector,
    gold: &LabelVector,
    config: &MetricConfig,
) -> ChexComparison {
    let policy = config.uncertain_policy;
    let mut totals = ObservationCounts::default();
    let per_observation = Observation::ALL
        .iter()
        .map(|&obs| {
            let p = is_positive(pred.get(obs), policy);
            let g = is_positive(gold.get(obs), policy);
            let counts = ObservationCounts {
                tp: usize::from(p && g),
                fp: usize::from(p && !g),
                fn_: usize::from(!p && g),
            };
            totals.tp += counts.tp;
            totals.fp += counts.fp;
            totals.fn_ += counts.fn_;
            (obs, counts)
        })
        .collect();
    ChexComparison {
        micro: totals.prf(),
        totals,
        per_observation,
    }
}
