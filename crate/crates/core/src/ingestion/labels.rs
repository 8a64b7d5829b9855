//! The 14 CheXpert observation classes and their 4-state label vectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::IngestError;

pub const NUM_CLASSES: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChexpertClass {
    Atelectasis,
    Cardiomegaly,
    Consolidation,
    Edema,
    EnlargedCardiomediastinum,
    Fracture,
    LungLesion,
    LungOpacity,
    NoFinding,
    PleuralEffusion,
    PleuralOther,
    Pneumonia,
    Pneumothorax,
    SupportDevices,
}

impl ChexpertClass {
    pub const ALL: [ChexpertClass; NUM_CLASSES] = [
        ChexpertClass::Atelectasis,
        ChexpertClass::Cardiomegaly,
        ChexpertClass::Consolidation,
        ChexpertClass::Edema,
        ChexpertClass::EnlargedCardiomediastinum,
        ChexpertClass::Fracture,
        ChexpertClass::LungLesion,
        ChexpertClass::LungOpacity,
        ChexpertClass::NoFinding,
        ChexpertClass::PleuralEffusion,
        ChexpertClass::PleuralOther,
        ChexpertClass::Pneumonia,
        ChexpertClass::Pneumothorax,
        ChexpertClass::SupportDevices,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ChexpertClass::Atelectasis => "Atelectasis",
            ChexpertClass::Cardiomegaly => "Cardiomegaly",
            ChexpertClass::Consolidation => "Consolidation",
            ChexpertClass::Edema => "Edema",
            ChexpertClass::EnlargedCardiomediastinum => "Enlarged Cardiomediastinum",
            ChexpertClass::Fracture => "Fracture",
            ChexpertClass::LungLesion => "Lung Lesion",
            ChexpertClass::LungOpacity => "Lung Opacity",
            ChexpertClass::NoFinding => "No Finding",
            ChexpertClass::PleuralEffusion => "Pleural Effusion",
            ChexpertClass::PleuralOther => "Pleural Other",
            ChexpertClass::Pneumonia => "Pneumonia",
            ChexpertClass::Pneumothorax => "Pneumothorax",
            ChexpertClass::SupportDevices => "Support Devices",
        }
    }
}

impl fmt::Display for ChexpertClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChexpertClass {
    type Err = IngestError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| IngestError::UnknownClass(s.to_string()))
    }
}

impl Serialize for ChexpertClass {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ChexpertClass {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Labeler output for one observation. Encoded on disk as `1`, `0`, `-1`
/// and `null` respectively.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelState {
    Positive,
    Negative,
    Uncertain,
    Missing,
}

impl LabelState {
    pub fn from_code(code: Option<i64>) -> Option<Self> {
        match code {
            Some(1) => Some(LabelState::Positive),
            Some(0) => Some(LabelState::Negative),
            Some(-1) => Some(LabelState::Uncertain),
            None => Some(LabelState::Missing),
            Some(_) => None,
        }
    }

    pub fn code(self) -> Option<i64> {
        match self {
            LabelState::Positive => Some(1),
            LabelState::Negative => Some(0),
            LabelState::Uncertain => Some(-1),
            LabelState::Missing => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabelVector(pub [LabelState; NUM_CLASSES]);

impl LabelVector {
    pub fn all(state: LabelState) -> Self {
        LabelVector([state; NUM_CLASSES])
    }

    /// Parses the on-disk code list (`-1`, `0`, `1` or `null`).
    pub fn from_codes(codes: &[Option<i64>]) -> Result<Self, IngestError> {
        if codes.len() != NUM_CLASSES {
            return Err(IngestError::LabelArity(codes.len()));
        }
        let mut states = [LabelState::Missing; NUM_CLASSES];
        for (slot, &code) in states.iter_mut().zip(codes) {
            *slot = LabelState::from_code(code).ok_or(IngestError::LabelCode(code.unwrap_or_default()))?;
        }
        Ok(LabelVector(states))
    }

    pub fn codes(&self) -> Vec<Option<i64>> {
        self.0.iter().map(|s| s.code()).collect()
    }

    pub fn get(&self, class: ChexpertClass) -> LabelState {
        self.0[class.index()]
    }

    pub fn with(mut self, class: ChexpertClass, state: LabelState) -> Self {
        self.0[class.index()] = state;
        self
    }

    /// Builds a vector with `positives` set and every other class negative.
    pub fn from_positives(positives: &[ChexpertClass]) -> Self {
        positives
            .iter()
            .fold(Self::all(LabelState::Negative), |v, &c| v.with(c, LabelState::Positive))
    }
}

impl Serialize for LabelVector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.codes().serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabelVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let codes = Vec::<Option<i64>>::deserialize(d)?;
        LabelVector::from_codes(&codes).map_err(serde::de::Error::custom)
    }
}

/// Binarised labels: uncertain and positive count as present, negative and
/// missing as absent.
pub fn normalize_labels(raw: &LabelVector) -> [u8; NUM_CLASSES] {
    raw.0.map(|s| match s {
        LabelState::Positive | LabelState::Uncertain => 1,
        LabelState::Negative | LabelState::Missing => 0,
    })
}

/// Re-encodes a binary vector as positive/negative states, so
/// `normalize_labels` can be applied again.
pub fn binary_to_states(binary: &[u8; NUM_CLASSES]) -> LabelVector {
    LabelVector(binary.map(|b| if b != 0 { LabelState::Positive } else { LabelState::Negative }))
}

/// Picks the single class a report is grouped under.
///
/// Among the classes that are present after normalisation, the lowest index
/// wins, except that "No Finding" is chosen only when it is the sole
/// positive. A report with no positives at all is also "No Finding".
pub fn primary_class(labels: &LabelVector) -> ChexpertClass {
    let binary = normalize_labels(labels);
    ChexpertClass::ALL
        .iter()
        .copied()
        .find(|&c| c != ChexpertClass::NoFinding && binary[c.index()] == 1)
        .unwrap_or(ChexpertClass::NoFinding)
}
