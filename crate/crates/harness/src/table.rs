//! Result tables and their two file formats.
//!
//! csv: header `<label columns>,mean,count,std`, one row per cell.
//! txt: the same columns separated by ` | `, preceded by a `# columns:` line.
//! Numbers are written in shortest round-trip form, so parsing an emitted
//! table returns it unchanged.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::spec::Study;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub labels: Vec<String>,
    pub mean: f64,
    pub count: usize,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub label_names: Vec<String>,
    pub rows: Vec<ResultRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Txt,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Txt => "txt",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

const TXT_SEP: &str = " | ";
const STAT_COLUMNS: [&str; 3] = ["mean", "count", "std"];

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl ResultTable {
    pub fn new(label_names: &[&str]) -> Self {
        Self {
            label_names: label_names.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Adds a cell summarizing `values`; cells without values are skipped
    /// so every mean stays finite.
    pub fn push(&mut self, labels: Vec<String>, values: &[f64]) {
        assert_eq!(labels.len(), self.label_names.len(), "label arity");
        if values.is_empty() {
            return;
        }
        let (mean, std) = mean_std(values);
        self.rows.push(ResultRow {
            labels,
            mean,
            count: values.len(),
            std,
        });
    }

    pub fn find(&self, labels: &[&str]) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.labels.iter().map(String::as_str).eq(labels.iter().copied()))
    }

    fn header(&self) -> Vec<&str> {
        self.label_names.iter().map(String::as_str).chain(STAT_COLUMNS).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header()).expect("in-memory write");
        for r in &self.rows {
            let stats = [r.mean.to_string(), r.count.to_string(), r.std.to_string()];
            w.write_record(r.labels.iter().chain(&stats)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn to_txt(&self) -> String {
        let mut out = format!("# columns: {}\n", self.header().join(TXT_SEP));
        for r in &self.rows {
            let stats = [r.mean.to_string(), r.count.to_string(), r.std.to_string()];
            let fields: Vec<&str> = r.labels.iter().chain(&stats).map(String::as_str).collect();
            writeln!(out, "{}", fields.join(TXT_SEP)).expect("string write");
        }
        out
    }

    pub fn emit(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Txt => self.to_txt(),
        }
    }

    pub fn parse(text: &str, format: Format) -> Result<Self, TableError> {
        let records: Vec<(usize, Vec<String>)> = match format {
            Format::Csv => {
                let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
                r.records()
                    .enumerate()
                    .map(|(i, rec)| {
                        rec.map(|rec| (i + 1, rec.iter().map(String::from).collect()))
                            .map_err(|e| TableError::Parse { line: i + 1, message: e.to_string() })
                    })
                    .collect::<Result<_, _>>()?
            }
            Format::Txt => {
                let mut lines = text.lines().enumerate();
                let (_, first) = lines.next().ok_or(TableError::Parse { line: 1, message: "empty file".into() })?;
                let header = first.strip_prefix("# columns: ").ok_or(TableError::Parse {
                    line: 1,
                    message: "missing '# columns:' header".into(),
                })?;
                std::iter::once((1, header.split(TXT_SEP).map(String::from).collect()))
                    .chain(lines.map(|(i, l)| (i + 1, l.split(TXT_SEP).map(String::from).collect())))
                    .collect()
            }
        };
        let Some((_, header)) = records.first() else {
            return Err(TableError::Parse { line: 1, message: "missing header".into() });
        };
        let n = header.len();
        if n < 3 || header[n - 3..] != STAT_COLUMNS {
            return Err(TableError::Parse {
                line: 1,
                message: format!("header must end with {}", STAT_COLUMNS.join(",")),
            });
        }
        let mut table = ResultTable {
            label_names: header[..n - 3].to_vec(),
            rows: Vec::new(),
        };
        for (line, fields) in &records[1..] {
            if fields.len() != n {
                return Err(TableError::Parse {
                    line: *line,
                    message: format!("{} fields, expected {n}", fields.len()),
                });
            }
            table.rows.push(ResultRow {
                labels: fields[..n - 3].to_vec(),
                mean: parse_field(&fields[n - 3], *line)?,
                count: parse_field(&fields[n - 2], *line)?,
                std: parse_field(&fields[n - 1], *line)?,
            });
        }
        Ok(table)
    }
}

fn parse_field<T: FromStr>(s: &str, line: usize) -> Result<T, TableError>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| TableError::Parse {
        line,
        message: format!("{s:?}: {e}"),
    })
}

/// `<dir>/<study>.<ext>`.
pub fn result_path(dir: &Path, study: Study, format: Format) -> PathBuf {
    dir.join(format!("{}.{}", study.name(), format.extension()))
}

/// Writes each study's table to its own file and returns the paths.
pub fn emit_batch(tables: &[(Study, ResultTable)], dir: &Path, format: Format) -> Result<Vec<PathBuf>, TableError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| TableError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    tables
        .iter()
        .map(|(study, table)| {
            let path = result_path(dir, *study, format);
            fs::write(&path, table.emit(format)).map_err(io(&path))?;
            Ok(path)
        })
        .collect()
}
