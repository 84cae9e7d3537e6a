//! Minimal CSV reading/writing for numeric tables.
//!
//! Every artifact this crate persists is a plain comma-separated table of
//! floats (written with 17 significant digits so round trips are exact) plus
//! an optional header line. Keeping the format this small makes outputs easy
//! to diff and avoids a parser dependency.

use crate::error::{HlsError, Result};
use nalgebra::DMatrix;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HlsError + '_ {
    move |e| HlsError::Io { path: path.display().to_string(), source: e }
}

/// Formats a float for persistence; exact on read-back.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes numeric rows under a header line.
pub fn write_csv<'a>(
    path: &Path,
    header: &str,
    rows: impl Iterator<Item = &'a [f64]>,
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        writeln!(out, "{header}")?;
        for row in rows {
            let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()
    })()
    .map_err(io_err(path))
}

/// Writes rows of already-formatted cells under a header line. Used when a
/// table mixes integers, floats, and labels.
pub fn write_text_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        writeln!(out, "{header}")?;
        for row in rows {
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()
    })()
    .map_err(io_err(path))
}

/// Writes a dense matrix as one CSV row per matrix row, no header.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        for i in 0..m.nrows() {
            let line: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()
    })()
    .map_err(io_err(path))
}

/// Reads a numeric CSV, skipping a header line if the first field does not
/// parse as a float. All rows must have equal width.
pub fn read_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let reader = std::io::BufReader::new(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if lineno == 0 && fields[0].trim().parse::<f64>().is_err() {
            continue; // header
        }
        let mut row = Vec::with_capacity(fields.len());
        for f in &fields {
            row.push(f.trim().parse::<f64>().map_err(|_| {
                HlsError::InvalidInput(format!(
                    "{}:{}: not a number: {f:?}",
                    path.display(),
                    lineno + 1
                ))
            })?);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(HlsError::InvalidInput(format!(
                    "{}:{}: expected {} fields, found {}",
                    path.display(),
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(HlsError::InvalidInput(format!(
            "{}: no numeric rows",
            path.display()
        )));
    }
    Ok(rows)
}

/// Reads a headerless numeric CSV into a dense matrix.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let rows = read_csv(path)?;
    let ncols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Reads the header line of a CSV file as trimmed column names.
pub fn read_header(path: &Path) -> Result<Vec<String>> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let reader = std::io::BufReader::new(file);
    let first = reader
        .lines()
        .next()
        .ok_or_else(|| HlsError::InvalidInput(format!("{}: empty file", path.display())))?
        .map_err(io_err(path))?;
    Ok(first.split(',').map(|s| s.trim().to_string()).collect())
}
