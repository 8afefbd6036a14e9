//! Table and manifest writers.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::Failure;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Missing,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) if *x != 0.0 && (x.abs() < 1e-4 || x.abs() >= 1e15) => format!("{x:e}"),
            Cell::Num(x) => x.to_string(),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) if x.is_finite() => json!(x),
            Cell::Num(_) | Cell::Missing => Value::Null,
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Int(i64::from(x))
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

/// A named table with `#` comment lines written above the CSV header.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub comments: Vec<String>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            ..Self::default()
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) -> &mut Self {
        self.comments.push(line.into());
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Collects output files and writes them under one directory.
pub struct Sink {
    dir: PathBuf,
    format: Format,
    written: Vec<String>,
}

impl Sink {
    pub fn new(dir: &Path, format: Format) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            format,
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, Failure> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| Failure::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    /// Writes `stem.csv` or `stem.json` depending on the output format.
    pub fn table(&mut self, stem: &str, table: &Table) -> Result<(), Failure> {
        match self.format {
            Format::Csv => {
                let name = format!("{stem}.csv");
                let path = self.dir.join(&name);
                let mut w = self.create(&name)?;
                for c in &table.comments {
                    writeln!(w, "# {c}").map_err(|e| Failure::io(&path, e))?;
                }
                let mut csv = csv::Writer::from_writer(w);
                let io = |e: csv::Error| Failure::Io(format!("{}: {e}", path.display()));
                csv.write_record(&table.columns).map_err(io)?;
                for row in &table.rows {
                    csv.write_record(row.iter().map(Cell::csv)).map_err(io)?;
                }
                csv.flush().map_err(|e| Failure::io(&path, e))
            }
            Format::Json => {
                let rows: Vec<Value> = table
                    .rows
                    .iter()
                    .map(|r| {
                        let m: Map<String, Value> = table
                            .columns
                            .iter()
                            .zip(r)
                            .map(|(c, v)| (c.to_string(), v.json()))
                            .collect();
                        Value::Object(m)
                    })
                    .collect();
                self.json(stem, &json!({ "comments": table.comments, "rows": rows }))
            }
        }
    }

    /// Writes `stem.json` regardless of the table format.
    pub fn json(&mut self, stem: &str, value: &impl Serialize) -> Result<(), Failure> {
        let name = format!("{stem}.json");
        let path = self.dir.join(&name);
        let mut w = self.create(&name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| Failure::io(&path, e))
    }
}
