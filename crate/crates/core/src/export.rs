//! Plain-file exports: grids as CSV, heatmaps as binary PGM, reports as JSON.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn grid_csv<T: Scalar>(grid: &Array2<T>) -> String {
    let mut out = String::new();
    for row in grid.rows() {
        let fields: Vec<String> = row.iter().map(|v| v.as_f64().to_string()).collect();
        let _ = writeln!(out, "{}", fields.join(","));
    }
    out
}

pub fn write_grid_csv<T: Scalar>(path: impl AsRef<Path>, grid: &Array2<T>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, grid_csv(grid)).map_err(|e| Error::io(path, e))
}

/// Binary greyscale image with values mapped linearly from `[0, max]` to
/// `[0, 255]`; an all-zero grid renders black.
pub fn pgm_bytes<T: Scalar>(grid: &Array2<T>) -> Vec<u8> {
    let (rows, cols) = grid.dim();
    let max = grid.iter().map(|v| v.as_f64()).fold(0.0, f64::max);
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(grid.iter().map(|v| {
        if max > 0.0 {
            (v.as_f64().max(0.0) / max * 255.0).round() as u8
        } else {
            0
        }
    }));
    out
}

pub fn write_pgm<T: Scalar>(path: impl AsRef<Path>, grid: &Array2<T>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, pgm_bytes(grid)).map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<S: Serialize + ?Sized>(path: impl AsRef<Path>, value: &S) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn csv_rows() {
        assert_eq!(grid_csv(&array![[0.5, 0.0], [0.25, 1.0]]), "0.5,0\n0.25,1\n");
    }

    #[test]
    fn pgm_header_and_scaling() {
        let bytes = pgm_bytes(&array![[0.0, 0.5, 1.0], [0.25, 0.0, 0.0]]);
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0, 128, 255, 64, 0, 0]);
        let dark = pgm_bytes(&Array2::<f64>::zeros((1, 2)));
        assert_eq!(&dark[dark.len() - 2..], &[0, 0]);
    }

    #[test]
    fn files_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let g = array![[1.0f32, 2.0]];
        write_grid_csv(dir.path().join("g.csv"), &g).unwrap();
        write_pgm(dir.path().join("g.pgm"), &g).unwrap();
        write_json(dir.path().join("g.json"), &vec![1, 2]).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("g.csv")).unwrap(), "1,2\n");
        assert_eq!(fs::read(dir.path().join("g.pgm")).unwrap().len(), 11 + 2);
        assert_eq!(fs::read_to_string(dir.path().join("g.json")).unwrap(), "[\n  1,\n  2\n]\n");
        assert!(matches!(write_pgm("/nonexistent/dir/x.pgm", &g), Err(Error::Io { .. })));
    }
}
