//! File formats shared by the command-line tool.
//!
//! Matrices are plain CSV (one row per line, no header) or JSON records
//! `{"d": 3, "entries": [[..], ..]}`. Loss vectors are CSV with all values
//! on one row or one per line. Trajectories are one 1-based state per line,
//! the first line being the initial state.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::markov::Trajectory;
use crate::solver::LossVector;
use crate::{Error, Result};

/// JSON form of a square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub d: usize,
    pub entries: Vec<Vec<f64>>,
}

impl MatrixRecord {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let entries = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        Self { d: m.nrows(), entries }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.entries.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, found: self.entries.len() });
        }
        if let Some(row) = self.entries.iter().find(|r| r.len() != self.d) {
            return Err(Error::DimensionMismatch { expected: self.d, found: row.len() });
        }
        Ok(DMatrix::from_fn(self.d, self.d, |i, j| self.entries[i][j]))
    }
}

/// Matrix output encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

fn parse_rows(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for rec in csv_reader(text).records() {
        let rec = rec?;
        let row = rec
            .iter()
            .filter(|f| !f.is_empty())
            .map(|f| f.parse::<f64>().map_err(|_| Error::invalid(format!("not a number: {f:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if !row.is_empty() {
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Parses a square matrix from CSV or JSON text.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    if text.trim_start().starts_with('{') {
        return serde_json::from_str::<MatrixRecord>(text)?.to_matrix();
    }
    let rows = parse_rows(text)?;
    let d = rows.len();
    if d == 0 {
        return Err(Error::invalid("matrix file is empty"));
    }
    if let Some(row) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: row.len() });
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix(&fs::read_to_string(path)?)
}

/// Encodes a matrix; CSV uses the shortest round-tripping decimal form.
pub fn format_matrix(m: &DMatrix<f64>, format: Format) -> Result<String> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(&MatrixRecord::from_matrix(m))? + "\n"),
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            for row in m.row_iter() {
                w.write_record(row.iter().map(|v| v.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
    }
}

/// Parses a loss vector laid out as one row or one column.
pub fn parse_loss(text: &str) -> Result<LossVector> {
    let rows = parse_rows(text)?;
    let values: Vec<f64> = if rows.len() == 1 || rows.iter().all(|r| r.len() == 1) {
        rows.into_iter().flatten().collect()
    } else {
        return Err(Error::invalid("loss file must hold a single row or a single column"));
    };
    LossVector::from_slice(&values)
}

pub fn read_loss(path: &Path) -> Result<LossVector> {
    parse_loss(&fs::read_to_string(path)?)
}

/// Parses a trajectory over `n_states` states from 1-based text.
pub fn parse_trajectory(text: &str, n_states: usize) -> Result<Trajectory> {
    let mut states = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let s: usize = line
            .parse()
            .map_err(|_| Error::invalid(format!("line {}: expected a state index, got {line:?}", line_no + 1)))?;
        if s == 0 || s > n_states {
            return Err(Error::invalid(format!("line {}: state {s} outside 1..={n_states}", line_no + 1)));
        }
        states.push(s - 1);
    }
    let Some((&first, rest)) = states.split_first() else {
        return Err(Error::invalid("trajectory file is empty"));
    };
    Trajectory::new(n_states, first, rest.to_vec())
}

pub fn read_trajectory(path: &Path, n_states: usize) -> Result<Trajectory> {
    parse_trajectory(&fs::read_to_string(path)?, n_states)
}

pub fn format_trajectory(traj: &Trajectory) -> String {
    std::iter::once(traj.initial_state())
        .chain(traj.states().iter().copied())
        .map(|s| format!("{}\n", s + 1))
        .collect()
}

/// Writes through a temporary file in the target directory so readers
/// never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Serializes rows as CSV with a header, or as a JSON array.
pub fn format_rows<T: Serialize>(rows: &[T], format: Format) -> Result<String> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(rows)? + "\n"),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trips_both_formats() {
        let m = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        for f in [Format::Csv, Format::Json] {
            let text = format_matrix(&m, f).unwrap();
            assert_eq!(parse_matrix(&text).unwrap(), m);
        }
    }

    #[test]
    fn ragged_csv_is_rejected() {
        assert!(matches!(parse_matrix("1,2\n3\n"), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn loss_accepts_row_or_column() {
        assert_eq!(parse_loss("1,2,3\n").unwrap().dim(), 3);
        assert_eq!(parse_loss("1\n2\n3\n").unwrap().dim(), 3);
        assert!(parse_loss("1,2\n3,4\n").is_err());
    }

    #[test]
    fn trajectory_is_one_based_on_disk() {
        let t = parse_trajectory("1\n2\n1\n2\n2\n", 2).unwrap();
        assert_eq!(t.initial_state(), 0);
        assert_eq!(t.states(), &[1, 0, 1, 1]);
        assert_eq!(format_trajectory(&t), "1\n2\n1\n2\n2\n");
        assert!(parse_trajectory("0\n", 2).is_err());
        assert!(parse_trajectory("3\n", 2).is_err());
    }

    #[test]
    fn atomic_write_replaces_target() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"first").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "second");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
