//! CSV and JSON emission.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde_json::Value;

/// Writes result files into one directory, stamping each CSV with a provenance line.
pub struct Output {
    dir: PathBuf,
    provenance: String,
}

pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            // 17 significant digits round-trip every f64
            Cell::Float(v) => write!(f, "{v:.16e}"),
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Text(s) => write!(f, "{s}"),
        }
    }
}

impl Output {
    pub fn new(dir: &Path, config_digest: &str, command: &str) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            provenance: format!(
                "# wbomd {} config-sha256={config_digest} command={command}",
                env!("CARGO_PKG_VERSION")
            ),
        })
    }

    pub fn csv(&self, name: &str, header: &[&str], rows: &[Vec<Cell>]) -> io::Result<PathBuf> {
        let path = self.dir.join(name);
        let mut out = io::BufWriter::new(fs::File::create(&path)?);
        writeln!(out, "{}", self.provenance)?;
        writeln!(out, "{}", header.join(","))?;
        for row in rows {
            let line: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()?;
        Ok(path)
    }

    pub fn json(&self, name: &str, value: &Value) -> io::Result<PathBuf> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value).expect("json serializes");
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }
}
