use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    chexpert_compare, is_positive, keyword_label, rouge_l, rouge_n, tokenize, Lexicon,
    MetricConfig, Prf,
};
use crate::corpus::Case;
use crate::error::{Error, Result};
use crate::labels::Observation;
use crate::parallel::{self, Exec};

/// Metric values for one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub case_id: String,
    pub rouge1: Prf,
    pub rouge2: Prf,
    #[serde(rename = "rougeL")]
    pub rouge_l: Prf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chex: Option<Prf>,
    /// Token count of the reference.
    pub ref_length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_label_count: Option<usize>,
}

/// The per-case scalars compared across groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "rouge1")]
    Rouge1,
    #[serde(rename = "rouge2")]
    Rouge2,
    #[serde(rename = "rougeL")]
    RougeL,
    #[serde(rename = "chex_precision")]
    ChexPrecision,
    #[serde(rename = "chex_recall")]
    ChexRecall,
    #[serde(rename = "chex_f1")]
    ChexF1,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Rouge1,
        Metric::Rouge2,
        Metric::RougeL,
        Metric::ChexPrecision,
        Metric::ChexRecall,
        Metric::ChexF1,
    ];
    pub const ROUGE: [Metric; 3] = [Metric::Rouge1, Metric::Rouge2, Metric::RougeL];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Rouge1 => "rouge1",
            Metric::Rouge2 => "rouge2",
            Metric::RougeL => "rougeL",
            Metric::ChexPrecision => "chex_precision",
            Metric::ChexRecall => "chex_recall",
            Metric::ChexF1 => "chex_f1",
        }
    }

    pub fn is_label_metric(self) -> bool {
        !Metric::ROUGE.contains(&self)
    }

    /// ROUGE metrics read the F-measure.
    pub fn value(self, record: &ScoreRecord) -> Option<f64> {
        match self {
            Metric::Rouge1 => Some(record.rouge1.f),
            Metric::Rouge2 => Some(record.rouge2.f),
            Metric::RougeL => Some(record.rouge_l.f),
            Metric::ChexPrecision => record.chex.map(|c| c.precision),
            Metric::ChexRecall => record.chex.map(|c| c.recall),
            Metric::ChexF1 => record.chex.map(|c| c.f),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric {s:?}")))
    }
}

/// Metric configuration plus the lexicon used when predicted labels have to
/// be derived from generated text.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scorer {
    pub metrics: MetricConfig,
    pub lexicon: Lexicon,
}

impl Scorer {
    pub fn new(metrics: MetricConfig, lexicon: Lexicon) -> Result<Self> {
        metrics.validate()?;
        Ok(Self { metrics, lexicon })
    }

    pub fn fingerprint(&self) -> String {
        super::hex_digest(
            format!("{}:{}", self.metrics.fingerprint(), self.lexicon.fingerprint()).as_bytes(),
        )
    }

    /// Scores `generated` against `reference`.
    ///
    /// Label agreement is computed when gold labels are present; missing
    /// predicted labels are derived from the generated text.
    pub fn score_case(&self, case: &Case) -> Result<ScoreRecord> {
        let generated = case.generated.as_deref().ok_or_else(|| Error::InvalidCase {
            id: case.id.clone(),
            message: "no generated text to score".into(),
        })?;
        let cfg = &self.metrics;
        let cand = tokenize(generated, cfg);
        let reference = tokenize(&case.reference, cfg);
        let refs = std::slice::from_ref(&reference);
        let (chex, positive_label_count) = match &case.gold_labels {
            Some(gold) => {
                let derived;
                let pred = match &case.pred_labels {
                    Some(p) => p,
                    None => {
                        derived = keyword_label(generated, &self.lexicon);
                        &derived
                    }
                };
                let count = Observation::ALL
                    .iter()
                    .filter(|o| is_positive(gold.get(**o), cfg.uncertain_policy))
                    .count();
                (Some(chexpert_compare(pred, gold, cfg).micro), Some(count))
            }
            None => (None, None),
        };
        Ok(ScoreRecord {
            case_id: case.id.clone(),
            rouge1: rouge_n(&cand, refs, 1),
            rouge2: rouge_n(&cand, refs, 2),
            rouge_l: rouge_l(&cand, &reference, cfg),
            chex,
            ref_length: reference.len(),
            positive_label_count,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringOutcome {
    pub records: Vec<ScoreRecord>,
    /// Ids of cases without generated text.
    pub skipped: Vec<String>,
}

/// Scores every case that has generated text, keeping input order.
pub fn score_all(cases: &[Case], scorer: &Scorer, exec: Exec) -> ScoringOutcome {
    let results = parallel::map(cases, exec, |c| scorer.score_case(c));
    let mut records = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for (case, result) in cases.iter().zip(results) {
        match result {
            Ok(r) => records.push(r),
            Err(_) => skipped.push(case.id.clone()),
        }
    }
    ScoringOutcome { records, skipped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{LabelState, LabelVector};
    use crate::metrics::TokenSeq;

    fn labelled(id: &str, reference: &str, generated: &str) -> Case {
        let mut c = Case::new(id, reference).with_generated(generated);
        c.gold_labels = Some(LabelVector::new().with(Observation::Edema, LabelState::Positive));
        c
    }

    #[test]
    fn identity_case_is_perfect() {
        let mut c = labelled("c", "mild edema, heart normal", "mild edema, heart normal");
        c.pred_labels = c.gold_labels.clone();
        let r = Scorer::default().score_case(&c).unwrap();
        for prf in [r.rouge1, r.rouge2, r.rouge_l, r.chex.unwrap()] {
            assert_eq!(prf, Prf::PERFECT);
        }
        assert_eq!(r.ref_length, 4);
        assert_eq!(r.positive_label_count, Some(1));
    }

    #[test]
    fn fields_match_standalone_operations() {
        let scorer = Scorer::default();
        let c = labelled("c", "The heart size is normal. Mild edema.", "heart size normal");
        let r = scorer.score_case(&c).unwrap();
        let cand: TokenSeq = tokenize("heart size normal", &scorer.metrics);
        let reference = tokenize(&c.reference, &scorer.metrics);
        assert_eq!(r.rouge1, rouge_n(&cand, std::slice::from_ref(&reference), 1));
        assert_eq!(r.rouge2, rouge_n(&cand, std::slice::from_ref(&reference), 2));
        assert_eq!(r.rouge_l, rouge_l(&cand, &reference, &scorer.metrics));
        let pred = keyword_label("heart size normal", &scorer.lexicon);
        assert_eq!(
            r.chex,
            Some(chexpert_compare(&pred, c.gold_labels.as_ref().unwrap(), &scorer.metrics).micro)
        );
    }

    #[test]
    fn labels_are_optional() {
        let c = Case::new("c", "heart normal").with_generated("heart normal");
        let r = Scorer::default().score_case(&c).unwrap();
        assert!(r.chex.is_none());
        assert_eq!(r.rouge1, Prf::PERFECT);
        let json = serde_json::to_string(&r).unwrap();
        assert!(!json.contains("chex"));
        assert!(json.contains("\"rougeL\""));
    }

    #[test]
    fn missing_generated_is_an_error_and_skipped() {
        let cases = vec![
            Case::new("a", "x").with_generated("x"),
            Case::new("b", "y"),
        ];
        assert!(Scorer::default().score_case(&cases[1]).is_err());
        let out = score_all(&cases, &Scorer::default(), Exec::Parallel);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.skipped, vec!["b".to_string()]);
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
    }
}
