use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::{Error, Result};

/// Provenance lines written as `#` comments above a TSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportHeader {
    pub command: String,
    pub git_rev: String,
    pub seed: u64,
    pub config: Vec<(String, String)>,
}

impl ReportHeader {
    pub fn new(command: impl Into<String>, git_rev: impl Into<String>, seed: u64) -> Self {
        ReportHeader {
            command: command.into(),
            git_rev: git_rev.into(),
            seed,
            config: Vec::new(),
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Display) -> Self {
        self.config.push((key.into(), value.to_string()));
        self
    }
}

/// A header-commented TSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct TsvReport {
    pub header: ReportHeader,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl TsvReport {
    pub fn new(header: ReportHeader, columns: &[&str]) -> Self {
        TsvReport {
            header,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::LengthMismatch {
                expected: self.columns.len(),
                actual: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "# command: {}", self.header.command)?;
        writeln!(w, "# git_rev: {}", self.header.git_rev)?;
        writeln!(w, "# seed: {}", self.header.seed)?;
        for (k, v) in &self.header.config {
            writeln!(w, "# {k}: {v}")?;
        }
        writeln!(w, "{}", self.columns.join("\t"))?;
        for row in &self.rows {
            writeln!(w, "{}", row.join("\t"))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Column-aligned plain-text rendering for terminals.
    pub fn to_table(&self) -> String {
        let mut widths: Vec<usize> = self.columns.iter().map(String::len).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = line(&self.columns);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }
}
