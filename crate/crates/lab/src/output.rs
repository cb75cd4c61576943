//! CSV tables, JSON summaries, digests and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{LabError, LabResult};

/// A numeric or text cell; numbers print with 17 significant digits.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) if x.is_finite() => format!("{x:.16e}"),
            Cell::Num(x) if x.is_nan() => "nan".into(),
            Cell::Num(x) => if *x > 0.0 { "inf".into() } else { "-inf".into() },
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Cell {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Cell {
        Cell::Int(x as i64)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Cell {
        Cell::Int(x)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Cell {
        Cell::Text(x.to_string())
    }
}

impl From<u32> for Cell {
    fn from(x: u32) -> Cell {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Cell {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Cell {
        Cell::Text(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Table {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutputRecord {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FailureRecord {
    pub stage: String,
    pub message: String,
    pub exit_code: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    /// Unix time at the start of the run; the only timestamp in any output.
    pub started_unix: u64,
    /// The configuration with every default spelled out.
    pub config: toml::Value,
    pub stages: Vec<StageTime>,
    pub outputs: Vec<OutputRecord>,
    pub failure: Option<FailureRecord>,
}

/// Writes files under one directory and records their digests.
pub struct OutputDir {
    root: PathBuf,
    records: Vec<OutputRecord>,
}

impl OutputDir {
    pub fn create(root: &Path) -> LabResult<OutputDir> {
        fs::create_dir_all(root).map_err(|e| LabError::io(root, e))?;
        Ok(OutputDir { root: root.to_path_buf(), records: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> LabResult<PathBuf> {
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|e| LabError::io(&path, e))?;
        self.records.retain(|r| r.path != name);
        self.records.push(OutputRecord { path: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() });
        Ok(path)
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> LabResult<PathBuf> {
        self.write(name, table.to_csv().as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> LabResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).expect("summary serializes");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn records(&self) -> &[OutputRecord] {
        &self.records
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_keep_17_significant_digits() {
        let mut t = Table::new(&["x", "label"]);
        t.push(vec![0.1.into(), "a,b".into()]);
        t.push(vec![f64::INFINITY.into(), 3usize.into()]);
        let csv = t.to_csv();
        assert_eq!(csv, "x,label\n1.0000000000000001e-1,\"a,b\"\ninf,3\n");
        let back: f64 = "1.0000000000000001e-1".parse().unwrap();
        assert_eq!(back, 0.1);
    }

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
