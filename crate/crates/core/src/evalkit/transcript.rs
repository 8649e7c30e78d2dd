use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::domain::{Transcript, TranscriptEvent};

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path} line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path} contains no events")]
    Empty { path: PathBuf },
}

/// Percent-encodes everything outside `[A-Za-z0-9_-]` (and a leading dot) so
/// any entry id maps to a distinct, safe file stem.
pub fn encode_file_stem(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    for b in id.bytes() {
        if b.is_ascii_alphanumeric() || b == b'_' || b == b'-' || (b == b'.' && !out.is_empty()) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

pub fn decode_file_stem(stem: &str) -> Option<String> {
    let bytes = stem.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = stem.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

/// Location of an entry's transcript relative to the transcript root.
pub fn transcript_relpath(dataset: &str, pipeline: &str, entry_id: &str) -> PathBuf {
    [encode_file_stem(dataset), pipeline.to_string(), format!("{}.jsonl", encode_file_stem(entry_id))]
        .iter()
        .collect()
}

/// Writes one JSON object per event. The file is replaced atomically, never
/// appended to.
pub fn persist_transcript(transcript: &Transcript, root: &Path, dataset: &str, pipeline: &str) -> io::Result<PathBuf> {
    let path = root.join(transcript_relpath(dataset, pipeline, &transcript.entry_id));
    let dir = path.parent().expect("relpath has a parent");
    fs::create_dir_all(dir)?;
    let mut file = tempfile::NamedTempFile::new_in(dir)?;
    for event in &transcript.events {
        serde_json::to_writer(&mut file, event)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    file.persist(&path).map_err(|e| e.error)?;
    Ok(path)
}

/// Reads a persisted transcript back. The entry id comes from the file name.
pub fn read_transcript(path: &Path) -> Result<Transcript, TranscriptError> {
    let io_err = |source| TranscriptError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let mut transcript = Transcript::new(decode_file_stem(stem).unwrap_or_else(|| stem.to_string()));
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let event: TranscriptEvent = serde_json::from_str(&line).map_err(|e| TranscriptError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        transcript.events.push(event);
    }
    if transcript.events.is_empty() {
        return Err(TranscriptError::Empty {
            path: path.to_path_buf(),
        });
    }
    Ok(transcript)
}
