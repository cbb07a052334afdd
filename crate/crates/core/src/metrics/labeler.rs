//! Approximate keyword labeler: phrase lookup with a short look-back
//! negation window.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{tokenize, MetricConfig, TokenSeq};
use crate::error::Result;
use crate::labels::{LabelState, LabelVector, Observation};

pub const NEGATION_CUES: [&str; 5] = ["no", "without", "negative", "free", "resolved"];

/// Number of tokens before a match searched for a negation cue.
pub const NEGATION_WINDOW: usize = 3;

/// Trigger phrases per observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Lexicon {
    phrases: BTreeMap<Observation, Vec<String>>,
}

impl Lexicon {
    pub fn empty() -> Self {
        Self {
            phrases: BTreeMap::new(),
        }
    }

    pub fn from_named<K: AsRef<str>>(map: impl IntoIterator<Item = (K, Vec<String>)>) -> Result<Self> {
        let mut phrases = BTreeMap::new();
        for (name, list) in map {
            let obs: Observation = name.as_ref().parse()?;
            phrases.insert(obs, list);
        }
        Ok(Self { phrases })
    }

    pub fn phrases(&self, obs: Observation) -> &[String] {
        self.phrases.get(&obs).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn insert(&mut self, obs: Observation, phrase: impl Into<String>) {
        self.phrases.entry(obs).or_default().push(phrase.into());
    }

    pub fn fingerprint(&self) -> String {
        super::hex_digest(&serde_json::to_vec(self).expect("lexicon serializes"))
    }

    /// Loads a JSON object of observation name to phrase list.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(text)?;
        Self::from_named(raw)
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        use Observation::*;
        let table: &[(Observation, &[&str])] = &[
            (
                EnlargedCardiomediastinum,
                &["enlarged cardiomediastinum", "widened mediastinum", "mediastinal widening"],
            ),
            (
                Cardiomegaly,
                &["cardiomegaly", "enlarged heart", "heart is enlarged", "enlarged cardiac silhouette"],
            ),
            (LungOpacity, &["opacity", "opacities", "opacification"]),
            (LungLesion, &["nodule", "nodules", "mass", "lesion"]),
            (Edema, &["edema", "vascular congestion"]),
            (Consolidation, &["consolidation", "consolidations"]),
            (Pneumonia, &["pneumonia", "infection"]),
            (Atelectasis, &["atelectasis", "atelectatic"]),
            (Pneumothorax, &["pneumothorax"]),
            (PleuralEffusion, &["pleural effusion", "effusion", "effusions"]),
            (PleuralOther, &["pleural thickening", "pleural scarring"]),
            (Fracture, &["fracture", "fractures"]),
            (
                SupportDevices,
                &["pacemaker", "catheter", "endotracheal tube", "picc", "sternotomy wires"],
            ),
        ];
        let mut lex = Lexicon::empty();
        for (obs, phrases) in table {
            for p in phrases.iter() {
                lex.insert(*obs, *p);
            }
        }
        lex
    }
}

fn find_all(haystack: &[String], needle: &[String]) -> Vec<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return Vec::new();
    }
    haystack
        .windows(needle.len())
        .enumerate()
        .filter(|(_, w)| *w == needle)
        .map(|(i, _)| i)
        .collect()
}

/// Labels `text` with the phrases in `lexicon`.
///
/// A phrase hit is positive unless one of [`NEGATION_CUES`] occurs within the
/// [`NEGATION_WINDOW`] tokens before it, in which case it is negative. Any
/// non-negated hit wins over negated ones. "No Finding" is positive exactly
/// when no other observation ends up positive; lexicon entries for it are
/// ignored.
pub fn keyword_label(text: &str, lexicon: &Lexicon) -> LabelVector {
    let config = MetricConfig::default();
    let tokens = tokenize(text, &config);
    let tokens = tokens.tokens();
    let mut labels = LabelVector::new();
    let mut any_positive = false;
    for &obs in Observation::ALL.iter().skip(1) {
        let mut state = LabelState::Blank;
        for phrase in lexicon.phrases(obs) {
            let needle: TokenSeq = tokenize(phrase, &config);
            for start in find_all(tokens, needle.tokens()) {
                let window = &tokens[start.saturating_sub(NEGATION_WINDOW)..start];
                let negated = window.iter().any(|t| NEGATION_CUES.contains(&t.as_str()));
                if negated {
                    if state == LabelState::Blank {
                        state = LabelState::Negative;
                    }
                } else {
                    state = LabelState::Positive;
                }
            }
        }
        if state != LabelState::Blank {
            any_positive |= state == LabelState::Positive;
            labels.set(obs, state);
        }
    }
    if !any_positive {
        labels.set(Observation::NoFinding, LabelState::Positive);
    }
    labels
}
