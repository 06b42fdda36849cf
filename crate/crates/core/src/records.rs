//! JSON-lines files of `{id, vector}` records.
//!
//! Acoustic features, raw image embeddings and bottleneck features all use
//! this layout.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: expected {expected} values, got {got}")]
    Dimension { line: usize, expected: usize, got: usize },
    #[error("line {line}: non-finite value at index {index}")]
    NonFinite { line: usize, index: usize },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorRecord {
    pub id: String,
    pub vector: Vec<f64>,
}

impl VectorRecord {
    pub fn new(id: impl Into<String>, vector: Vec<f64>) -> Self {
        Self { id: id.into(), vector }
    }

    /// Checks length and finiteness; `line` only labels the error.
    pub fn validate(&self, expected: Option<usize>, line: usize) -> Result<(), RecordError> {
        if let Some(expected) = expected {
            if self.vector.len() != expected {
                return Err(RecordError::Dimension {
                    line,
                    expected,
                    got: self.vector.len(),
                });
            }
        }
        if let Some(index) = self.vector.iter().position(|v| !v.is_finite()) {
            return Err(RecordError::NonFinite { line, index });
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    vector: Vec<Option<f64>>,
}

fn io_err(path: &Path, e: impl ToString) -> RecordError {
    RecordError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Reads every non-blank line. Ids must be unique; lines are numbered from 1.
pub fn read_records(path: &Path, expected: Option<usize>) -> Result<Vec<VectorRecord>, RecordError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let text = line.map_err(|e| io_err(path, e))?;
        if text.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&text).map_err(|e| RecordError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        // NaN and infinities are written as null by most JSON encoders.
        if let Some(index) = raw.vector.iter().position(Option::is_none) {
            return Err(RecordError::NonFinite { line: line_no, index });
        }
        let rec = VectorRecord {
            id: raw.id,
            vector: raw.vector.into_iter().flatten().collect(),
        };
        rec.validate(expected, line_no)?;
        if !seen.insert(rec.id.clone()) {
            return Err(RecordError::DuplicateId { line: line_no, id: rec.id });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records<'a>(path: &Path, records: impl IntoIterator<Item = &'a VectorRecord>) -> Result<(), RecordError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| io_err(path, e))?;
        w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}
