//! The fixed registry of 14 chest-radiograph observations and per-report
//! label vectors over it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Bumped whenever the registry below changes.
pub const REGISTRY_VERSION: u32 = 1;

/// Observation names, in registry order.
pub const OBSERVATION_NAMES: [&str; 14] = [
    "No Finding",
    "Enlarged Cardiomediastinum",
    "Cardiomegaly",
    "Lung Opacity",
    "Lung Lesion",
    "Edema",
    "Consolidation",
    "Pneumonia",
    "Atelectasis",
    "Pneumothorax",
    "Pleural Effusion",
    "Pleural Other",
    "Fracture",
    "Support Devices",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Observation {
    NoFinding,
    EnlargedCardiomediastinum,
    Cardiomegaly,
    LungOpacity,
    LungLesion,
    Edema,
    Consolidation,
    Pneumonia,
    Atelectasis,
    Pneumothorax,
    PleuralEffusion,
    PleuralOther,
    Fracture,
    SupportDevices,
}

impl Observation {
    pub const ALL: [Observation; 14] = [
        Observation::NoFinding,
        Observation::EnlargedCardiomediastinum,
        Observation::Cardiomegaly,
        Observation::LungOpacity,
        Observation::LungLesion,
        Observation::Edema,
        Observation::Consolidation,
        Observation::Pneumonia,
        Observation::Atelectasis,
        Observation::Pneumothorax,
        Observation::PleuralEffusion,
        Observation::PleuralOther,
        Observation::Fracture,
        Observation::SupportDevices,
    ];

    pub fn name(self) -> &'static str {
        OBSERVATION_NAMES[self as usize]
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Observation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OBSERVATION_NAMES
            .iter()
            .position(|name| *name == s)
            .map(|i| Observation::ALL[i])
            .ok_or_else(|| Error::UnknownObservation(s.to_string()))
    }
}

impl Serialize for Observation {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Observation {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelState {
    Positive,
    Negative,
    Uncertain,
    Blank,
}

/// Observation states for one report. Observations without an entry are blank.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelVector {
    entries: BTreeMap<Observation, LabelState>,
}

impl LabelVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, obs: Observation, state: LabelState) {
        self.entries.insert(obs, state);
    }

    pub fn with(mut self, obs: Observation, state: LabelState) -> Self {
        self.set(obs, state);
        self
    }

    pub fn get(&self, obs: Observation) -> LabelState {
        self.entries.get(&obs).copied().unwrap_or(LabelState::Blank)
    }

    pub fn entries(&self) -> impl Iterator<Item = (Observation, LabelState)> + '_ {
        self.entries.iter().map(|(o, s)| (*o, *s))
    }

    /// Builds a vector from name/state pairs, rejecting names outside the registry.
    pub fn from_named<'a>(
        pairs: impl IntoIterator<Item = (&'a str, LabelState)>,
    ) -> Result<Self, Error> {
        let mut out = Self::new();
        for (name, state) in pairs {
            out.set(name.parse()?, state);
        }
        Ok(out)
    }

    /// True when every observation is blank.
    pub fn is_blank(&self) -> bool {
        self.entries.values().all(|s| *s == LabelState::Blank)
    }
}
