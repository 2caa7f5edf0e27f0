//! CSV tables with a `#` metadata header.
//!
//! ```text
//! # wgqkd 0.1.0
//! # table = sweep
//! # config_hash = 3f2a…
//! #@ channel.alpha_db_per_km = 0.21
//! …
//! l_km,R,Q_s,E_s,Y1_lower,e1_upper
//! 0.0,0.0123,…
//! ```
//!
//! `#@` lines echo every parameter the table depends on; the hash is the SHA-256
//! of that echo, truncated to 16 hex digits.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::fmt;
use crate::error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(x) => fmt(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub metadata: Vec<(String, String)>,
}

impl OutputTable {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        OutputTable {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            metadata: Vec::new(),
        }
    }

    pub fn with_metadata(mut self, metadata: Vec<(String, String)>) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::InvalidParameter(format!(
                "table `{}` has {} columns, row has {}",
                self.name,
                self.columns.len(),
                row.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn config_hash(&self) -> String {
        config_hash(&self.metadata)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# wgqkd {VERSION}");
        let _ = writeln!(s, "# table = {}", self.name);
        let _ = writeln!(s, "# config_hash = {}", self.config_hash());
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "#@ {k} = {v}");
        }
        let _ = writeln!(s, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|source| Error::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        std::fs::write(path, self.to_csv()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub fn config_hash(metadata: &[(String, String)]) -> String {
    let mut h = Sha256::new();
    for (k, v) in metadata {
        h.update(k.as_bytes());
        h.update(b" = ");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Header fields and raw cells of a CSV written by [`OutputTable::to_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTable {
    pub name: String,
    pub config_hash: String,
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ParsedTable {
    /// The `#@` echo as config text.
    pub fn metadata_text(&self) -> String {
        self.metadata.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        self.rows.iter().map(|r| r[i].parse().ok()).collect()
    }
}

/// Splits one CSV record, honouring double-quoted fields.
fn split_record(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted && chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            '"' => quoted = !quoted,
            ',' if !quoted => out.push(std::mem::take(&mut cur)),
            c => cur.push(c),
        }
    }
    out.push(cur);
    out
}

pub fn parse_csv(text: &str) -> Result<ParsedTable> {
    let mut t = ParsedTable {
        name: String::new(),
        config_hash: String::new(),
        metadata: Vec::new(),
        columns: Vec::new(),
        rows: Vec::new(),
    };
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("#@ ") {
            let (k, v) = rest
                .split_once(" = ")
                .ok_or_else(|| Error::InvalidParameter(format!("bad metadata line `{line}`")))?;
            t.metadata.push((k.to_string(), v.to_string()));
        } else if let Some(rest) = line.strip_prefix("# ") {
            if let Some(v) = rest.strip_prefix("table = ") {
                t.name = v.to_string();
            } else if let Some(v) = rest.strip_prefix("config_hash = ") {
                t.config_hash = v.to_string();
            }
        } else if t.columns.is_empty() {
            t.columns = split_record(line);
        } else {
            let row = split_record(line);
            if row.len() != t.columns.len() {
                return Err(Error::InvalidParameter(format!(
                    "row `{line}` has {} cells, expected {}",
                    row.len(),
                    t.columns.len()
                )));
            }
            t.rows.push(row);
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> OutputTable {
        let mut t = OutputTable::new("demo", &["x", "label"]).with_metadata(vec![
            ("a.b".into(), "1.5".into()),
            ("c".into(), "lp".into()),
        ]);
        t.push(vec![Cell::Float(1.7e-6), "plain".into()]).unwrap();
        t.push(vec![Cell::Float(0.1 + 0.2), "with, comma".into()]).unwrap();
        t
    }

    #[test]
    fn csv_round_trip() {
        let t = sample();
        let csv = t.to_csv();
        let p = parse_csv(&csv).unwrap();
        assert_eq!(p.name, "demo");
        assert_eq!(p.config_hash, t.config_hash());
        assert_eq!(p.metadata, t.metadata);
        assert_eq!(p.rows[1][1], "with, comma");
        assert_eq!(p.column("x").unwrap(), vec![1.7e-6, 0.1 + 0.2]);
        assert_eq!(p.metadata_text(), "a.b = 1.5\nc = lp\n");
    }

    #[test]
    fn column_count_is_enforced() {
        let mut t = sample();
        assert!(t.push(vec![Cell::Int(1)]).is_err());
    }

    #[test]
    fn hash_tracks_metadata() {
        let a = sample();
        let mut b = sample();
        assert_eq!(a.config_hash().len(), 16);
        b.metadata[0].1 = "1.50001".into();
        assert_ne!(a.config_hash(), b.config_hash());
    }
}
