use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{validate_case, validate_mcq, ClinicalCase, McqItem, RawCase, RawMcq, ValidationError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mcq,
    Clinical,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mcq => "mcq",
            Self::Clinical => "clinical",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mcq" => Ok(Self::Mcq),
            "clinical" => Ok(Self::Clinical),
            _ => Err(format!("unknown dataset kind `{s}` (expected mcq or clinical)")),
        }
    }
}

/// One validated dataset record.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Entry {
    Mcq(McqItem),
    Clinical(ClinicalCase),
}

impl Entry {
    pub fn id(&self) -> &str {
        match self {
            Self::Mcq(item) => &item.id,
            Self::Clinical(case) => &case.id,
        }
    }

    pub fn kind(&self) -> DatasetKind {
        match self {
            Self::Mcq(_) => DatasetKind::Mcq,
            Self::Clinical(_) => DatasetKind::Clinical,
        }
    }
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

/// Outcome of reading one non-blank line. `record` is 1-based over records,
/// `line` is 1-based over the file.
#[derive(Debug)]
pub struct RecordRead {
    pub record: usize,
    pub line: usize,
    pub result: Result<Entry, RecordError>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("record {record} (line {line}): {source}")]
    Record {
        record: usize,
        line: usize,
        source: RecordError,
    },
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("duplicate entry id `{id}` at record {record}")]
    DuplicateId { id: String, record: usize },
}

fn parse_record(line: &str, kind: DatasetKind) -> Result<Entry, RecordError> {
    let json = |e: serde_json::Error| RecordError::Json(e.to_string());
    Ok(match kind {
        DatasetKind::Mcq => Entry::Mcq(validate_mcq(serde_json::from_str::<RawMcq>(line).map_err(json)?)?),
        DatasetKind::Clinical => {
            Entry::Clinical(validate_case(serde_json::from_str::<RawCase>(line).map_err(json)?)?)
        }
    })
}

/// Parses every record of a JSONL document without stopping at the first bad
/// one. Blank lines are skipped.
pub fn read_records(contents: &str, kind: DatasetKind) -> Vec<RecordRead> {
    contents
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .enumerate()
        .map(|(i, (line, text))| RecordRead {
            record: i + 1,
            line: line + 1,
            result: parse_record(text, kind),
        })
        .collect()
}

/// Strict parse: the first invalid record fails the whole dataset.
pub fn parse_dataset(contents: &str, kind: DatasetKind) -> Result<Vec<Entry>, DatasetError> {
    let mut ids = HashSet::new();
    let mut entries = Vec::new();
    for read in read_records(contents, kind) {
        let entry = read.result.map_err(|source| DatasetError::Record {
            record: read.record,
            line: read.line,
            source,
        })?;
        if !ids.insert(entry.id().to_string()) {
            return Err(DatasetError::DuplicateId {
                id: entry.id().to_string(),
                record: read.record,
            });
        }
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    Ok(entries)
}

/// Loads a UTF-8 JSONL dataset, entries in file order.
pub fn load_dataset(path: &Path, kind: DatasetKind) -> Result<Vec<Entry>, DatasetError> {
    let contents = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dataset(&contents, kind)
}
