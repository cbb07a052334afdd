//! Synthetic two-group corpora with an injected quality gap.
//!
//! Every case is a set of findings. A finding has a short source code (the
//! model input) and a fixed phrase (its share of the reference). The second
//! group gets longer references and more findings drawn from a rarely seen
//! pool.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Case, CaseSet};
use crate::error::{Error, Result};
use crate::labels::Observation;
use crate::metrics::{keyword_label, Lexicon, NEGATION_CUES};

/// Attribute marking each synthetic case as `train` or `heldout`.
pub const SPLIT_ATTRIBUTE: &str = "split";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupProfile {
    pub label: String,
    pub train_cases: usize,
    pub heldout_cases: usize,
    /// Target reference length in tokens; each case draws uniformly from
    /// `length_mean +- length_spread`.
    pub length_mean: usize,
    pub length_spread: usize,
    /// Probability that a finding slot holds a pathology phrase.
    pub keyword_rate: f64,
    /// Probability that a non-pathology slot comes from the rare pool.
    pub rare_rate: f64,
}

impl Default for GroupProfile {
    fn default() -> Self {
        Self {
            label: "a".into(),
            train_cases: 200,
            heldout_cases: 100,
            length_mean: 10,
            length_spread: 3,
            keyword_rate: 0.1,
            rare_rate: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Attribute name carrying the group label.
    pub attribute: String,
    /// Number of distinct filler words.
    pub vocab_size: usize,
    /// Share of filler words reserved for rare findings.
    pub rare_vocab_fraction: f64,
    pub common_findings: usize,
    pub rare_findings: usize,
    /// Exactly two groups; the second is the disadvantaged one.
    pub groups: Vec<GroupProfile>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            attribute: "group".into(),
            vocab_size: 200,
            rare_vocab_fraction: 0.75,
            common_findings: 20,
            rare_findings: 60,
            groups: vec![
                GroupProfile::default(),
                GroupProfile {
                    label: "b".into(),
                    length_mean: 11,
                    rare_rate: 0.4,
                    ..GroupProfile::default()
                },
            ],
        }
    }
}

impl SynthConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.attribute.is_empty() {
            return bad("group attribute name is empty".into());
        }
        if self.vocab_size == 0 {
            return bad("vocabulary is empty".into());
        }
        if !(0.0..=1.0).contains(&self.rare_vocab_fraction) {
            return bad("rare_vocab_fraction must lie in [0, 1]".into());
        }
        let rare_words = self.rare_word_count();
        if self.common_findings > 0 && self.vocab_size == rare_words {
            return bad("no filler words left for common findings".into());
        }
        if self.rare_findings > 0 && rare_words == 0 {
            return bad("no filler words left for rare findings".into());
        }
        if self.groups.len() != 2 {
            return bad(format!("expected 2 groups, got {}", self.groups.len()));
        }
        if self.groups[0].label == self.groups[1].label {
            return bad("group labels must differ".into());
        }
        for g in &self.groups {
            if g.label.is_empty() {
                return bad("group label is empty".into());
            }
            if g.train_cases + g.heldout_cases == 0 {
                return bad(format!("group {:?} has zero cases", g.label));
            }
            if g.length_mean == 0 || g.length_spread >= g.length_mean {
                return bad(format!(
                    "group {:?} needs length_mean >= 1 and length_spread < length_mean",
                    g.label
                ));
            }
            for (name, v) in [("keyword_rate", g.keyword_rate), ("rare_rate", g.rare_rate)] {
                if !(0.0..=1.0).contains(&v) {
                    return bad(format!("group {:?}: {name} must lie in [0, 1]", g.label));
                }
            }
            if g.keyword_rate < 1.0 && self.common_findings + self.rare_findings == 0 {
                return bad("no non-pathology findings configured".into());
            }
        }
        Ok(())
    }

    fn rare_word_count(&self) -> usize {
        ((self.vocab_size as f64) * self.rare_vocab_fraction).round() as usize
    }
}

const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "p", "r", "s", "t", "v"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// Deterministic pronounceable filler word for index `i`: three syllables,
/// distinct for every `i`.
fn filler_word(i: usize) -> String {
    let base = ONSETS.len() * VOWELS.len();
    let a = i % base;
    let b = (i / base + 7 * a) % base;
    let c = (11 * a + 3 * b + 5) % base;
    let mut word = String::new();
    for syl in [a, b, c] {
        word.push_str(ONSETS[syl / VOWELS.len()]);
        word.push_str(VOWELS[syl % VOWELS.len()]);
    }
    let rest = i / (base * base);
    if rest > 0 {
        word.push_str(&rest.to_string());
    }
    word
}

struct Finding {
    code: String,
    phrase: String,
}

struct Inventory {
    common: Vec<Finding>,
    rare: Vec<Finding>,
    pathology: Vec<Finding>,
}

fn build_inventory(config: &SynthConfig, lexicon: &Lexicon, rng: &mut ChaCha8Rng) -> Inventory {
    let reserved: BTreeSet<&str> = Observation::ALL
        .iter()
        .flat_map(|o| lexicon.phrases(*o))
        .flat_map(|p| p.split_whitespace())
        .chain(NEGATION_CUES)
        .collect();
    let mut words = Vec::with_capacity(config.vocab_size);
    let mut i = 0;
    while words.len() < config.vocab_size {
        let w = filler_word(i);
        if !reserved.contains(w.as_str()) {
            words.push(w);
        }
        i += 1;
    }
    let rare_words = words.split_off(config.vocab_size - config.rare_word_count());
    // Words are dealt out without replacement, reshuffling a pool only once
    // it is exhausted, so phrases share words only when the pool is small.
    let phrases = |pool: &[String], count: usize, prefix: char, rng: &mut ChaCha8Rng| {
        let mut deck: Vec<&str> = Vec::new();
        (0..count)
            .map(|k| {
                let len = rng.random_range(2..=3);
                let phrase: Vec<&str> = (0..len)
                    .map(|_| {
                        if deck.is_empty() {
                            deck = pool.iter().map(String::as_str).collect();
                            deck.shuffle(rng);
                        }
                        deck.pop().expect("pool is nonempty")
                    })
                    .collect();
                Finding {
                    code: format!("{prefix}{k}"),
                    phrase: phrase.join(" "),
                }
            })
            .collect::<Vec<_>>()
    };
    let common = phrases(&words, config.common_findings, 'c', rng);
    let rare = phrases(&rare_words, config.rare_findings, 'r', rng);
    let pathology = Observation::ALL
        .iter()
        .filter(|o| **o != Observation::NoFinding)
        .filter_map(|o| lexicon.phrases(*o).first())
        .enumerate()
        .map(|(k, p)| Finding {
            code: format!("p{k}"),
            phrase: p.clone(),
        })
        .collect();
    Inventory {
        common,
        rare,
        pathology,
    }
}

fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Picks findings for one case and returns `(source, reference)`.
fn draw_case(inv: &Inventory, profile: &GroupProfile, rng: &mut ChaCha8Rng) -> (String, String) {
    let spread = profile.length_spread as i64;
    let target = (profile.length_mean as i64 + rng.random_range(-spread..=spread)).max(1) as usize;
    // (pool rank, index within pool) keeps a canonical order when joined.
    let mut chosen: BTreeSet<(usize, usize)> = BTreeSet::new();
    let pools = [&inv.common, &inv.rare, &inv.pathology];
    let mut len = 0;
    let mut attempts = 0;
    while len < target && attempts < 1000 {
        attempts += 1;
        let pool = if rng.random_bool(profile.keyword_rate) {
            2
        } else if rng.random_bool(profile.rare_rate) {
            1
        } else {
            0
        };
        let pool = if pools[pool].is_empty() {
            if pools[0].is_empty() { 1 } else { 0 }
        } else {
            pool
        };
        if pools[pool].is_empty() {
            break;
        }
        let idx = rng.random_range(0..pools[pool].len());
        if chosen.insert((pool, idx)) {
            len += word_count(&pools[pool][idx].phrase);
        }
    }
    let mut codes: Vec<&str> = chosen.iter().map(|(p, i)| pools[*p][*i].code.as_str()).collect();
    codes.shuffle(rng);
    let reference: Vec<&str> = chosen.iter().map(|(p, i)| pools[*p][*i].phrase.as_str()).collect();
    (codes.join(" "), reference.join(" "))
}

/// Generates the corpus for `config`; a pure function of `(config, seed)`.
///
/// Gold labels come from the default keyword lexicon applied to each
/// reference, so a case without pathology phrases is labelled No Finding.
pub fn synth_biased_corpus(config: &SynthConfig, seed: u64) -> Result<CaseSet> {
    config.validate()?;
    let lexicon = Lexicon::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inv = build_inventory(config, &lexicon, &mut rng);
    let mut cases = Vec::new();
    for profile in &config.groups {
        let splits = [("train", profile.train_cases), ("heldout", profile.heldout_cases)];
        for (split, count) in splits {
            for i in 0..count {
                let (source, reference) = draw_case(&inv, profile, &mut rng);
                let mut case = Case::new(format!("{}-{split}-{i:04}", profile.label), reference)
                    .with_attr(&config.attribute, &profile.label)
                    .with_attr(SPLIT_ATTRIBUTE, split);
                case.gold_labels = Some(keyword_label(&case.reference, &lexicon));
                case.source = Some(source);
                cases.push(case);
            }
        }
    }
    CaseSet::new(cases, format!("synthetic:{seed}"))
}
