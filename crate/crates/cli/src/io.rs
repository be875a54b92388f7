//! Series readers and versioned report writers.
//!
//! Every delimited report starts with `# ebkalman <kind> v<version>` and a
//! header row; the JSON-lines variant tags each record with
//! `"schema": "ebkalman.<kind>.v<version>"`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ebkalman::poisson::CountSeries;
use ebkalman::ObservationSeries;
use serde_json::{Map, Value};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty())
        .collect())
}

/// One observation per line, `NA` for missing. Blank lines are ignored.
pub fn read_series(path: &Path) -> Result<ObservationSeries, CliError> {
    let mut values = Vec::new();
    for (line, text) in read_lines(path)? {
        if text == "NA" {
            values.push(None);
            continue;
        }
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(Some(v)),
            _ => {
                return Err(CliError::Data(format!(
                    "{}:{line}: expected a finite number or NA, found '{text}'",
                    path.display()
                )))
            }
        }
    }
    if values.is_empty() {
        return Err(CliError::Data(format!("{}: no observations", path.display())));
    }
    Ok(ObservationSeries::from_options(values)?)
}

/// One nonnegative integer count per line.
pub fn read_counts(path: &Path) -> Result<CountSeries, CliError> {
    let mut counts = Vec::new();
    for (line, text) in read_lines(path)? {
        let v = text.parse::<u64>().map_err(|_| {
            CliError::Data(format!(
                "{}:{line}: expected a nonnegative integer count, found '{text}'",
                path.display()
            ))
        })?;
        counts.push(v);
    }
    if counts.is_empty() {
        return Err(CliError::Data(format!("{}: no counts", path.display())));
    }
    Ok(CountSeries::new(counts))
}

/// A report cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Num(f64),
    Text(String),
    Missing,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => "NA".into(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => Value::from(*v),
            Cell::Num(v) => Value::from(*v),
            Cell::Text(s) => Value::from(s.as_str()),
            Cell::Missing => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Num)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

pub struct Report {
    kind: &'static str,
    columns: &'static [&'static str],
    rows: Vec<Vec<Cell>>,
}

impl Report {
    pub fn new(kind: &'static str, columns: &'static [&'static str]) -> Self {
        Self {
            kind,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> String {
        let mut out = String::new();
        match format {
            Format::Csv => {
                out.push_str(&format!("# ebkalman {} v{SCHEMA_VERSION}\n", self.kind));
                out.push_str(&self.columns.join(","));
                out.push('\n');
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
            }
            Format::Jsonl => {
                for row in &self.rows {
                    let mut m = Map::new();
                    m.insert(
                        "schema".into(),
                        Value::from(format!("ebkalman.{}.v{SCHEMA_VERSION}", self.kind)),
                    );
                    for (c, v) in self.columns.iter().zip(row) {
                        m.insert((*c).into(), v.json());
                    }
                    out.push_str(&Value::Object(m).to_string());
                    out.push('\n');
                }
            }
        }
        out
    }
}

/// Writes to `path`, or to stdout when no path is given.
pub fn emit(text: &str, path: Option<&PathBuf>) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| CliError::io(p, e))?;
            let mut w = BufWriter::new(file);
            w.write_all(text.as_bytes()).map_err(|e| CliError::io(p, e))?;
            w.flush().map_err(|e| CliError::io(p, e))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(text.as_bytes())
                .map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}
