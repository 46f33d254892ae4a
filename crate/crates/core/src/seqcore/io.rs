//! Embedding and label files.
//!
//! Embeddings are CSV (one frame per row, `#` lines are comments/headers) or
//! JSON objects of the form `{"frames": [[...], ...], "source_id": "..."}`.
//! Labels are CSV rows `frame_index,phase_label`, where `-1` marks background.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EmbeddingSequence;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingFile {
    pub frames: Vec<Vec<f64>>,
    #[serde(default)]
    pub source_id: String,
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads a sequence; `.json` files use the JSON layout, anything else is CSV.
pub fn read_embedding_file<T: Scalar>(path: impl AsRef<Path>) -> Result<EmbeddingSequence<T>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let (rows, source_id) = if is_json {
        let file: EmbeddingFile =
            serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))?;
        let id = if file.source_id.is_empty() { stem } else { file.source_id };
        (file.frames, id)
    } else {
        (parse_csv_rows(path, &text)?, stem)
    };
    let rows: Vec<Vec<T>> = rows
        .into_iter()
        .map(|r| r.into_iter().map(to_scalar).collect())
        .collect();
    EmbeddingSequence::from_rows(&rows, source_id).map_err(|e| parse_err(path, e.to_string()))
}

// Non-finite inputs stay non-finite so validation reports them.
fn to_scalar<T: Scalar>(v: f64) -> T {
    T::from_f64(v).unwrap_or_else(T::nan)
}

fn parse_csv_rows(path: &Path, text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|field| {
                field.trim().parse::<f64>().map_err(|_| {
                    parse_err(path, format!("line {}: bad number {:?}", lineno + 1, field.trim()))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_embedding_csv<T: Scalar>(
    path: impl AsRef<Path>,
    seq: &EmbeddingSequence<T>,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let header: Vec<String> = (0..seq.dim()).map(|k| format!("f{k}")).collect();
    let _ = writeln!(out, "# {}", header.join(","));
    for row in seq.frames().rows() {
        let fields: Vec<String> = row.iter().map(|v| v.as_f64().to_string()).collect();
        let _ = writeln!(out, "{}", fields.join(","));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_embedding_json<T: Scalar>(
    path: impl AsRef<Path>,
    seq: &EmbeddingSequence<T>,
) -> Result<()> {
    let path = path.as_ref();
    let file = EmbeddingFile {
        frames: seq
            .frames()
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v.as_f64()).collect())
            .collect(),
        source_id: seq.source_id().to_string(),
    };
    let text = serde_json::to_string(&file)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads per-frame phase ids. Every index in `0..n` must appear exactly once.
pub fn read_label_file(path: impl AsRef<Path>) -> Result<Vec<i64>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(parse_err(path, format!("line {}: expected 2 columns", lineno + 1)));
        }
        let (Ok(index), Ok(label)) = (fields[0].parse::<usize>(), fields[1].parse::<i64>()) else {
            if lineno == 0 {
                // column-name header
                continue;
            }
            return Err(parse_err(path, format!("line {}: bad label row", lineno + 1)));
        };
        if label < -1 {
            return Err(parse_err(path, format!("line {}: phase ids must be >= -1", lineno + 1)));
        }
        pairs.push((index, label));
    }
    let n = pairs.len();
    let mut labels = vec![None; n];
    for (index, label) in pairs {
        match labels.get_mut(index) {
            Some(slot @ None) => *slot = Some(label),
            Some(Some(_)) => return Err(parse_err(path, format!("duplicate frame index {index}"))),
            None => return Err(parse_err(path, format!("frame index {index} out of range"))),
        }
    }
    Ok(labels.into_iter().map(|l| l.unwrap_or(-1)).collect())
}

pub fn write_label_file(path: impl AsRef<Path>, labels: &[i64]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("frame_index,phase_label\n");
    for (i, l) in labels.iter().enumerate() {
        let _ = writeln!(out, "{i},{l}");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
