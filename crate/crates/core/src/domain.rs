//! Core data types shared by every pipeline and the evaluation harness.
//!
//! Everything here is immutable after construction. Raw records coming from
//! dataset files are deserialized into the `Raw*` shapes and promoted to the
//! validated types through [`validate_mcq`] and [`validate_case`].

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::text;

const UNKNOWN_ID: &str = "<unknown>";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("item {id}: missing field `{field}`")]
    MissingField { id: String, field: &'static str },
    #[error("item {id}: answer letter `{letter}` is not one of the options")]
    UnknownAnswerLetter { id: String, letter: String },
    #[error("item {id}: option letters `{letters}` are not contiguous from A")]
    NonContiguousOptions { id: String, letters: String },
    #[error("item {id}: `{letter}` is not an option letter (A-E)")]
    InvalidOptionLetter { id: String, letter: String },
    #[error("item {id}: expected 2 to 5 options, found {count}")]
    OptionCount { id: String, count: usize },
    #[error("item {id}: option {letter} has empty text")]
    EmptyOptionText { id: String, letter: OptionId },
    #[error("case {id}: `{field}` contains the gold diagnosis")]
    DiagnosisLeakage { id: String, field: &'static str },
    #[error("case {id}: duplicate test `{name}`")]
    DuplicateTest { id: String, name: String },
    #[error("case {id}: duplicate candidate `{name}`")]
    DuplicateCandidate { id: String, name: String },
}

impl ValidationError {
    /// Identifier of the offending record.
    pub fn item_id(&self) -> &str {
        match self {
            Self::MissingField { id, .. }
            | Self::UnknownAnswerLetter { id, .. }
            | Self::NonContiguousOptions { id, .. }
            | Self::InvalidOptionLetter { id, .. }
            | Self::OptionCount { id, .. }
            | Self::EmptyOptionText { id, .. }
            | Self::DiagnosisLeakage { id, .. }
            | Self::DuplicateTest { id, .. }
            | Self::DuplicateCandidate { id, .. } => id,
        }
    }
}

/// A multiple-choice option letter, `A` through `E`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OptionId(u8);

impl OptionId {
    pub const MAX: usize = 5;

    pub fn from_index(index: usize) -> Option<Self> {
        (index < Self::MAX).then(|| Self(index as u8))
    }

    pub fn from_letter(c: char) -> Option<Self> {
        if c.is_ascii_uppercase() {
            Self::from_index((c as u8 - b'A') as usize)
        } else {
            None
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn letter(self) -> char {
        (b'A' + self.0) as char
    }
}

impl fmt::Display for OptionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for OptionId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Self::from_letter(c).ok_or_else(|| s.to_string()),
            _ => Err(s.to_string()),
        }
    }
}

impl Serialize for OptionId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OptionId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse()
            .map_err(|bad| de::Error::custom(format!("invalid option letter `{bad}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct McqItem {
    pub id: String,
    pub question: String,
    pub options: BTreeMap<OptionId, String>,
    pub answer: OptionId,
}

impl McqItem {
    /// Option letters in order together with their texts.
    pub fn option_list(&self) -> impl Iterator<Item = (OptionId, &str)> {
        self.options.iter().map(|(k, v)| (*k, v.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiseaseCandidate {
    pub name: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClinicalCase {
    pub id: String,
    pub patient_profile: String,
    pub explicit_symptoms: String,
    pub candidates: Vec<DiseaseCandidate>,
    pub tests: IndexMap<String, String>,
    pub correct_diagnosis: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Correct,
    Incorrect,
}

impl Verdict {
    pub fn from_bool(correct: bool) -> Self {
        if correct {
            Self::Correct
        } else {
            Self::Incorrect
        }
    }

    pub fn is_correct(self) -> bool {
        self == Self::Correct
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Correct => "CORRECT",
            Self::Incorrect => "INCORRECT",
        })
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "CORRECT" => Ok(Self::Correct),
            "INCORRECT" => Ok(Self::Incorrect),
            other => Err(format!("unknown verdict `{other}`")),
        }
    }
}

/// Who produced a transcript event.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Role {
    Doctor,
    Patient,
    Measurement,
    Moderator,
    Expert(String),
    System,
    /// A pipeline stage label, emitted before the calls belonging to that stage.
    Stage(String),
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Doctor => f.write_str("doctor"),
            Self::Patient => f.write_str("patient"),
            Self::Measurement => f.write_str("measurement"),
            Self::Moderator => f.write_str("moderator"),
            Self::System => f.write_str("system"),
            Self::Expert(name) => write!(f, "expert:{name}"),
            Self::Stage(label) => write!(f, "stage:{label}"),
        }
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "doctor" => Self::Doctor,
            "patient" => Self::Patient,
            "measurement" => Self::Measurement,
            "moderator" => Self::Moderator,
            "system" => Self::System,
            _ => match s.split_once(':') {
                Some(("expert", name)) if !name.is_empty() => Self::Expert(name.to_string()),
                Some(("stage", label)) if !label.is_empty() => Self::Stage(label.to_string()),
                _ => return Err(format!("unknown role `{s}`")),
            },
        })
    }
}

impl Serialize for Role {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Role {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEvent {
    pub role: Role,
    pub text: String,
    pub backend_name: String,
    pub latency_seconds: f64,
}

/// Ordered record of everything said during one entry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    pub entry_id: String,
    pub events: Vec<TranscriptEvent>,
}

impl Transcript {
    pub fn new(entry_id: impl Into<String>) -> Self {
        Self {
            entry_id: entry_id.into(),
            events: Vec::new(),
        }
    }

    /// Appends an event. Negative or non-finite latencies are clamped to zero.
    pub fn push(
        &mut self,
        role: Role,
        text: impl Into<String>,
        backend_name: impl Into<String>,
        latency_seconds: f64,
    ) {
        let latency_seconds = if latency_seconds.is_finite() && latency_seconds > 0.0 {
            latency_seconds
        } else {
            0.0
        };
        self.events.push(TranscriptEvent {
            role,
            text: text.into(),
            backend_name: backend_name.into(),
            latency_seconds,
        });
    }

    pub fn total_latency(&self) -> f64 {
        self.events.iter().map(|e| e.latency_seconds).sum()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct RawMcq {
    pub id: Option<String>,
    pub question: Option<String>,
    pub options: Option<IndexMap<String, String>>,
    pub answer: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct RawCandidate {
    pub name: Option<String>,
    pub description: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct RawCase {
    pub id: Option<String>,
    pub patient_profile: Option<String>,
    pub explicit_symptoms: Option<String>,
    #[serde(default)]
    pub candidates: Vec<RawCandidate>,
    #[serde(default)]
    pub tests: OrderedPairs,
    pub correct_diagnosis: Option<String>,
}

/// JSON object read as key/value pairs in file order, keeping duplicate keys
/// so validation can reject them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OrderedPairs(pub Vec<(String, String)>);

impl<'de> Deserialize<'de> for OrderedPairs {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PairsVisitor;

        impl<'de> Visitor<'de> for PairsVisitor {
            type Value = OrderedPairs;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object of test name to result text")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut pairs = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, String>()? {
                    pairs.push((k, v));
                }
                Ok(OrderedPairs(pairs))
            }

            fn visit_unit<E: de::Error>(self) -> Result<Self::Value, E> {
                Ok(OrderedPairs::default())
            }
        }

        deserializer.deserialize_any(PairsVisitor)
    }
}

fn required(value: Option<String>, id: &str, field: &'static str) -> Result<String, ValidationError> {
    match value.map(|v| v.trim().to_string()) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(ValidationError::MissingField {
            id: id.to_string(),
            field,
        }),
    }
}

pub fn validate_mcq(raw: RawMcq) -> Result<McqItem, ValidationError> {
    let id = required(raw.id, UNKNOWN_ID, "id")?;
    let question = required(raw.question, &id, "question")?;
    let raw_options = raw.options.ok_or_else(|| ValidationError::MissingField {
        id: id.clone(),
        field: "options",
    })?;
    let answer_raw = required(raw.answer, &id, "answer")?;

    let count = raw_options.len();
    if !(2..=OptionId::MAX).contains(&count) {
        return Err(ValidationError::OptionCount { id, count });
    }

    let mut options = BTreeMap::new();
    for (letter, option_text) in raw_options {
        let key: OptionId = letter
            .parse()
            .map_err(|_| ValidationError::InvalidOptionLetter {
                id: id.clone(),
                letter: letter.clone(),
            })?;
        let option_text = option_text.trim().to_string();
        if option_text.is_empty() {
            return Err(ValidationError::EmptyOptionText { id, letter: key });
        }
        options.insert(key, option_text);
    }
    let contiguous = options
        .keys()
        .enumerate()
        .all(|(i, key)| key.index() == i);
    if !contiguous || options.len() != count {
        let letters: String = options.keys().map(|k| k.letter()).collect();
        return Err(ValidationError::NonContiguousOptions { id, letters });
    }

    let answer = answer_raw
        .parse::<OptionId>()
        .ok()
        .filter(|a| options.contains_key(a))
        .ok_or_else(|| ValidationError::UnknownAnswerLetter {
            id: id.clone(),
            letter: answer_raw.clone(),
        })?;

    Ok(McqItem {
        id,
        question,
        options,
        answer,
    })
}

/// Validates a clinical case. The gold diagnosis must not appear in any text
/// that agents other than the moderator get to see.
pub fn validate_case(raw: RawCase) -> Result<ClinicalCase, ValidationError> {
    let id = required(raw.id, UNKNOWN_ID, "id")?;
    let patient_profile = required(raw.patient_profile, &id, "patient_profile")?;
    let correct_diagnosis = required(raw.correct_diagnosis, &id, "correct_diagnosis")?;
    let explicit_symptoms = raw
        .explicit_symptoms
        .map(|s| s.trim().to_string())
        .unwrap_or_default();

    if text::contains_ci(&patient_profile, &correct_diagnosis) {
        return Err(ValidationError::DiagnosisLeakage {
            id,
            field: "patient_profile",
        });
    }
    if text::contains_ci(&explicit_symptoms, &correct_diagnosis) {
        return Err(ValidationError::DiagnosisLeakage {
            id,
            field: "explicit_symptoms",
        });
    }

    let mut seen = HashSet::new();
    let mut candidates = Vec::with_capacity(raw.candidates.len());
    for candidate in raw.candidates {
        let name = required(candidate.name, &id, "candidates.name")?;
        if !seen.insert(text::fold_key(&name)) {
            return Err(ValidationError::DuplicateCandidate { id, name });
        }
        let description = candidate
            .description
            .map(|d| d.trim().to_string())
            .unwrap_or_default();
        candidates.push(DiseaseCandidate { name, description });
    }

    let mut seen = HashSet::new();
    let mut tests = IndexMap::new();
    for (name, result) in raw.tests.0 {
        let name = name.trim().to_string();
        if name.is_empty() {
            return Err(ValidationError::MissingField {
                id,
                field: "tests.name",
            });
        }
        if !seen.insert(text::test_name_key(&name)) {
            return Err(ValidationError::DuplicateTest { id, name });
        }
        if text::contains_ci(&name, &correct_diagnosis) || text::contains_ci(&result, &correct_diagnosis) {
            return Err(ValidationError::DiagnosisLeakage { id, field: "tests" });
        }
        tests.insert(name, result.trim().to_string());
    }

    Ok(ClinicalCase {
        id,
        patient_profile,
        explicit_symptoms,
        candidates,
        tests,
        correct_diagnosis,
    })
}
