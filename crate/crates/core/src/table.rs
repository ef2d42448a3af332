//! Long-format result tables with a provenance block.
//!
//! A table is written as CSV whose first line is a `#` comment carrying the
//! provenance, plus a JSON sidecar (`<file>.json`) with the same block.

use std::cmp::Ordering;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::format_float;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(config_bytes: &[u8], seed: Option<u64>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash(config_bytes),
            seed,
        }
    }

    pub fn comment_line(&self) -> String {
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        format!(
            "# tool={} version={} config_hash={} seed={}",
            self.tool, self.version, self.config_hash, seed
        )
    }

    fn parse_comment(line: &str) -> Result<Self> {
        let body = line
            .strip_prefix('#')
            .ok_or_else(|| Error::Config("missing provenance line".into()))?;
        let mut tool = None;
        let mut version = None;
        let mut hash = None;
        let mut seed = None;
        for field in body.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad provenance field {field:?}")))?;
            match k {
                "tool" => tool = Some(v.to_string()),
                "version" => version = Some(v.to_string()),
                "config_hash" => hash = Some(v.to_string()),
                "seed" if v == "none" => seed = None,
                "seed" => {
                    seed = Some(v.parse().map_err(|_| Error::Config(format!("bad seed {v:?}")))?)
                }
                _ => return Err(Error::Config(format!("unknown provenance field {k:?}"))),
            }
        }
        match (tool, version, hash) {
            (Some(tool), Some(version), Some(config_hash)) => Ok(Self {
                tool,
                version,
                config_hash,
                seed,
            }),
            _ => Err(Error::Config("incomplete provenance line".into())),
        }
    }
}

/// Hex SHA-256 of the raw config bytes.
pub fn config_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn rank(&self) -> u8 {
        match self {
            Cell::Int(_) => 0,
            Cell::Float(_) => 1,
            Cell::Text(_) => 2,
        }
    }

    fn total_cmp(&self, other: &Cell) -> Ordering {
        match (self, other) {
            (Cell::Int(a), Cell::Int(b)) => a.cmp(b),
            (Cell::Float(a), Cell::Float(b)) => a.total_cmp(b),
            (Cell::Text(a), Cell::Text(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            Cell::Text(s) => s.parse().ok(),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Float(v) => f.write_str(&format_float(*v)),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    columns: Vec<String>,
    key_columns: usize,
    rows: Vec<Vec<Cell>>,
    pub provenance: Provenance,
}

impl ResultTable {
    /// The first `key_columns` columns order the rows.
    pub fn new(columns: &[&str], key_columns: usize, provenance: Provenance) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            key_columns: key_columns.min(columns.len()),
            rows: Vec::new(),
            provenance,
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::DimensionMismatch {
                expected: self.columns.len(),
                got: row.len(),
            });
        }
        let pos = self
            .rows
            .partition_point(|r| self.key_cmp(r, &row) != Ordering::Greater);
        self.rows.insert(pos, row);
        Ok(())
    }

    fn key_cmp(&self, a: &[Cell], b: &[Cell]) -> Ordering {
        (0..self.key_columns)
            .map(|k| a[k].total_cmp(&b[k]))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[k]).collect())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.provenance.comment_line())?;
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(&self.columns)?;
        for row in &self.rows {
            wtr.write_record(row.iter().map(|c| c.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Writes `path` and its JSON sidecar.
    pub fn save(&self, path: &FsPath) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf)?;
        write_sidecar(path, &self.provenance)
    }

    /// Reads a table back; every cell is returned as text.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let provenance = Provenance::parse_comment(first.trim_end())?;
        let mut rdr = csv::Reader::from_reader(reader);
        let columns: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?.iter().map(|s| Cell::Text(s.to_string())).collect());
        }
        Ok(Self {
            columns,
            key_columns: 0,
            rows,
            provenance,
        })
    }
}

pub fn sidecar_path(path: &FsPath) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_sidecar(path: &FsPath, provenance: &Provenance) -> Result<()> {
    let json = serde_json::to_string_pretty(provenance)?;
    std::fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

pub fn read_sidecar(path: &FsPath) -> Result<Provenance> {
    let text = std::fs::read_to_string(sidecar_path(path))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_sorted_by_key() {
        let p = Provenance::new(b"{}", Some(3));
        let mut t = ResultTable::new(&["h", "value"], 1, p);
        t.push(vec![0.6.into(), 1.0.into()]).unwrap();
        t.push(vec![0.52.into(), 3.0.into()]).unwrap();
        t.push(vec![0.55.into(), 2.0.into()]).unwrap();
        let keys: Vec<f64> = t.column("h").unwrap().iter().map(|c| c.as_f64().unwrap()).collect();
        assert_eq!(keys, vec![0.52, 0.55, 0.6]);
        assert!(t.push(vec![1.0.into()]).is_err());
    }

    #[test]
    fn csv_roundtrip_keeps_provenance() {
        let p = Provenance::new(b"{\"a\":1}", None);
        let mut t = ResultTable::new(&["name", "x"], 1, p.clone());
        t.push(vec!["b".into(), 0.1.into()]).unwrap();
        t.push(vec!["a".into(), 2usize.into()]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# tool=fbm-mdp"));
        assert!(text.contains("\nname,x\na,2\nb,0.1\n"));
        let back = ResultTable::read_csv(&buf[..]).unwrap();
        assert_eq!(back.provenance, p);
        assert_eq!(back.rows().len(), 2);
        assert_eq!(config_hash(b"{\"a\":1}").len(), 64);
    }
}
