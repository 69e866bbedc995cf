//! Report output: the same rows render as CSV or as a JSON array.
//!
//! Numbers are written in shortest round-trip form in both formats, so a
//! fixed seed and config produce byte-identical files regardless of thread
//! count or format conversions elsewhere.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// One table cell. `Missing` renders as an empty CSV field / JSON null.
#[derive(Debug, Clone)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
    Missing,
}

/// Cell for an optional statistic (e.g. a block error with B = 1).
pub fn opt_num(v: Option<f64>) -> Cell {
    v.map(Cell::Num).unwrap_or(Cell::Missing)
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Num(v) => fmt_f64(*v),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Int(i) => (*i).into(),
            Cell::Num(v) => serde_json::Number::from_f64(*v)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Cell::Text(s) => s.clone().into(),
            Cell::Missing => serde_json::Value::Null,
        }
    }
}

/// Shortest decimal that round-trips to the same f64 (the JSON number
/// grammar has no NaN/inf, and neither do our tables on success paths).
fn fmt_f64(v: f64) -> String {
    serde_json::Number::from_f64(v)
        .map(|n| n.to_string())
        .unwrap_or_default()
}

/// Column-ordered rows under a fixed header.
pub struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Write `<stem>.csv` or `<stem>.json` under `dir`; returns the path.
    pub fn write(&self, dir: &Path, stem: &str, format: Format) -> Result<PathBuf, CliError> {
        let ext = match format {
            Format::Csv => "csv",
            Format::Json => "json",
        };
        let path = dir.join(format!("{stem}.{ext}"));
        let mut w = buf_writer(&path)?;
        match format {
            Format::Csv => {
                writeln!(w, "{}", self.columns.join(",")).map_err(io_err(&path))?;
                for row in &self.rows {
                    let line: Vec<String> = row.iter().map(Cell::csv).collect();
                    writeln!(w, "{}", line.join(",")).map_err(io_err(&path))?;
                }
            }
            Format::Json => {
                let rows: Vec<serde_json::Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let mut obj = serde_json::Map::new();
                        for (col, cell) in self.columns.iter().zip(row) {
                            obj.insert((*col).to_string(), cell.json());
                        }
                        serde_json::Value::Object(obj)
                    })
                    .collect();
                serde_json::to_writer_pretty(&mut w, &rows)
                    .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                writeln!(w).map_err(io_err(&path))?;
            }
        }
        w.flush().map_err(io_err(&path))?;
        Ok(path)
    }
}

/// Write any serializable value as pretty JSON under `dir`.
pub fn write_json<T: Serialize>(value: &T, dir: &Path, name: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let mut w = buf_writer(&path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    writeln!(w).map_err(io_err(&path))?;
    w.flush().map_err(io_err(&path))?;
    Ok(path)
}

fn buf_writer(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}
