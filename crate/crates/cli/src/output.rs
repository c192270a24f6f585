//! CSV emission with round-trip precision, checksums and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

/// 17 significant digits, `.` decimal separator.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Build CSV text: header row, then rows, LF line endings.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn nums(&mut self, values: &[f64]) {
        let fields: Vec<String> = values.iter().map(|&v| num(v)).collect();
        self.row(&fields);
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Output directory that records a checksum for every file written.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(root)
            .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.root.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.files.insert(name.to_string(), sha256_hex(contents.as_bytes()));
        Ok(())
    }

    pub fn checksums(&self) -> &BTreeMap<String, String> {
        &self.files
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub config: &'a BTreeMap<String, String>,
    pub master_seed: Option<u64>,
    pub workers: usize,
    pub reduction_order: &'a str,
    pub wall_clock_seconds: f64,
    pub outputs: &'a BTreeMap<String, String>,
    pub results: &'a serde_json::Value,
}

pub const REDUCTION_ORDER: &str =
    "realizations run in parallel on independent streams; sums are accumulated sequentially in realization index order";

impl Manifest<'_> {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// Parse a numeric CSV written by this tool: header names and rows.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Failure::Usage(format!("{} is empty", path.display())))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|_| Failure::Usage(format!("{}: bad number on line {}", path.display(), n + 2)))?;
        if row.len() != header.len() {
            return Err(Failure::Usage(format!(
                "{}: line {} has {} fields, expected {}",
                path.display(),
                n + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Render a key/value summary for stdout.
pub fn summary_lines(pairs: &[(&str, String)]) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        let _ = writeln!(s, "{k}: {v}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_layout_and_checksums() {
        let mut c = Csv::new(&["t", "x"]);
        c.nums(&[0.0, 1.5]);
        let text = c.into_string();
        assert_eq!(text, "t,x\n0.0000000000000000e0,1.5000000000000000e0\n");
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        out.write("a.csv", &text).unwrap();
        assert_eq!(out.checksums()["a.csv"], sha256_hex(text.as_bytes()));
        let (h, rows) = read_numeric_csv(&dir.path().join("a.csv")).unwrap();
        assert_eq!(h, vec!["t", "x"]);
        assert_eq!(rows, vec![vec![0.0, 1.5]]);
    }
}
