//! Case records, validation, ingestion and group partitioning.

mod oversample;
mod partition;
mod synth;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelVector;
use crate::selection::QualityKey;

pub use oversample::oversample;
pub use partition::{partition, GroupKey, GroupSpec, Partition};
pub use synth::{synth_biased_corpus, GroupProfile, SynthConfig, SPLIT_ATTRIBUTE};

/// Top-level fields accepted in a case record.
pub const CASE_FIELDS: [&str; 10] = [
    "id",
    "attributes",
    "source",
    "reference",
    "generated",
    "candidates",
    "gold_labels",
    "pred_labels",
    "ce_loss",
    "ranking_loss",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<QualityKey>,
}

impl Candidate {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            model_score: None,
            quality: None,
        }
    }
}

/// One evaluation unit.
///
/// `source` is the model input (findings text, or the tokenized stand-in for
/// an image); it is only needed when a case is used for training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub id: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub reference: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<Candidate>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_labels: Option<LabelVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_labels: Option<LabelVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ce_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking_loss: Option<f64>,
}

impl Case {
    pub fn new(id: impl Into<String>, reference: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            attributes: BTreeMap::new(),
            source: None,
            reference: reference.into(),
            generated: None,
            candidates: None,
            gold_labels: None,
            pred_labels: None,
            ce_loss: None,
            ranking_loss: None,
        }
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.insert(key.into(), value.into());
        self
    }

    pub fn with_generated(mut self, text: impl Into<String>) -> Self {
        self.generated = Some(text.into());
        self
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attributes.get(key).map(String::as_str)
    }

    /// Checks the per-case invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |message: &str| Error::InvalidCase {
            id: self.id.clone(),
            message: message.to_string(),
        };
        if self.id.is_empty() {
            return Err(bad("id is empty"));
        }
        if self.reference.is_empty() {
            return Err(bad("reference is empty"));
        }
        if let Some(cands) = &self.candidates {
            if cands.len() < 2 {
                return Err(bad("candidate list needs at least 2 entries"));
            }
            if cands.iter().any(|c| c.text.is_empty()) {
                return Err(bad("candidate text is empty"));
            }
        }
        for (name, loss) in [("ce_loss", self.ce_loss), ("ranking_loss", self.ranking_loss)] {
            if let Some(v) = loss {
                if !v.is_finite() || v < 0.0 {
                    return Err(bad(&format!("{name} must be finite and >= 0")));
                }
            }
        }
        Ok(())
    }
}

/// A validated collection of cases with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseSet {
    cases: Vec<Case>,
    provenance: String,
    index: HashMap<String, usize>,
}

impl CaseSet {
    pub fn new(cases: Vec<Case>, provenance: impl Into<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(cases.len());
        for (i, case) in cases.iter().enumerate() {
            case.validate()?;
            if index.insert(case.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(case.id.clone()));
            }
        }
        Ok(Self {
            cases,
            provenance: provenance.into(),
            index,
        })
    }

    pub fn cases(&self) -> &[Case] {
        &self.cases
    }

    pub fn into_cases(self) -> Vec<Case> {
        self.cases
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Case> {
        self.index.get(id).map(|&i| &self.cases[i])
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Case> {
        self.cases.iter()
    }

    /// Cases whose attribute `key` equals `value`, in set order.
    pub fn filter_attr(&self, key: &str, value: &str) -> Result<CaseSet> {
        let cases = self
            .cases
            .iter()
            .filter(|c| c.attr(key) == Some(value))
            .cloned()
            .collect();
        CaseSet::new(cases, format!("{}[{key}={value}]", self.provenance))
    }

    /// Writes one JSON record per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for case in &self.cases {
            serde_json::to_writer(&mut out, case)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a CaseSet {
    type Item = &'a Case;
    type IntoIter = std::slice::Iter<'a, Case>;

    fn into_iter(self) -> Self::IntoIter {
        self.cases.iter()
    }
}

/// A record skipped during lenient loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub cases: CaseSet,
    pub dropped: Vec<Rejection>,
}

/// Reads a line-delimited case file.
///
/// In strict mode the first invalid record aborts with its line number; in
/// lenient mode invalid records are dropped and reported in `dropped`.
pub fn load_cases(path: impl AsRef<Path>, strict: bool) -> Result<Loaded> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut loaded = read_cases(BufReader::new(file), strict).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    loaded.cases.provenance = path.display().to_string();
    Ok(loaded)
}

/// Same as [`load_cases`] over any buffered reader.
pub fn read_cases<R: BufRead>(reader: R, strict: bool) -> Result<Loaded> {
    let mut cases = Vec::new();
    let mut seen = HashSet::new();
    let mut dropped = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = parse_record(&line, strict).and_then(|case| {
            if seen.contains(&case.id) {
                Err(Error::DuplicateId(case.id))
            } else {
                Ok(case)
            }
        });
        match parsed {
            Ok(case) => {
                seen.insert(case.id.clone());
                cases.push(case);
            }
            Err(e) if strict => {
                return Err(Error::Record {
                    line: line_no,
                    message: e.to_string(),
                })
            }
            Err(e) => dropped.push(Rejection {
                line: line_no,
                reason: e.to_string(),
            }),
        }
    }
    Ok(Loaded {
        cases: CaseSet::new(cases, "<input>")?,
        dropped,
    })
}

fn parse_record(line: &str, strict: bool) -> Result<Case> {
    let value: serde_json::Value = serde_json::from_str(line)?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::InvalidArgument("record is not a JSON object".into()))?;
    if strict {
        if let Some(key) = obj.keys().find(|k| !CASE_FIELDS.contains(&k.as_str())) {
            return Err(Error::InvalidArgument(format!("unknown field {key:?}")));
        }
    }
    let case: Case = serde_json::from_value(value)?;
    case.validate()?;
    Ok(case)
}
