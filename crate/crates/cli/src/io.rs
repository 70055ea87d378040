//! Count tables on disk.
//!
//! CSV: a header `t,<site names>` and one row per day holding the exposure
//! followed by the counts.  JSON: an object with `t` (per day) and `n`
//! (rows per day); optional `y` (site labels), `m` (unthinned counts) and
//! `sites` are read when present and every other key is ignored, so
//! simulation reports can be fed straight back in.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use zipm_core::{Counts, ExposureGrid};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: u64,
        message: String,
    },

    #[error("negative count {value} at {at}")]
    NegativeCount { value: i64, at: String },

    #[error("row {row} has {found} counts, expected {expected}")]
    RaggedRows {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error(transparent)]
    Model(#[from] zipm_core::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// `.json` means JSON, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// An ingested count table.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    pub grid: ExposureGrid,
    pub sites: Vec<String>,
    pub n: Counts,
    /// Site labels (`true` = rare component), when the file carries them.
    pub y: Option<Vec<bool>>,
    /// Counts before thinning, when the file carries them.
    pub m: Option<Counts>,
}

impl CountTable {
    pub fn new(grid: ExposureGrid, n: Counts) -> Self {
        let sites = default_site_names(grid.sites());
        Self {
            grid,
            sites,
            n,
            y: None,
            m: None,
        }
    }
}

pub fn default_site_names(sites: usize) -> Vec<String> {
    (1..=sites).map(|j| format!("s{j}")).collect()
}

/// Shortest text that parses back to the same value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.to_path_buf(),
        source,
    }
}

pub fn ingest_counts(path: &Path, format: Format) -> Result<CountTable, IoError> {
    let file = File::open(path).map_err(file_err(path))?;
    match format {
        Format::Csv => read_csv(BufReader::new(file)),
        Format::Json => {
            let mut text = String::new();
            BufReader::new(file).read_to_string(&mut text).map_err(file_err(path))?;
            parse_json(&text)
        }
    }
}

fn csv_err(e: csv::Error) -> IoError {
    let line = e.position().map_or(0, |p| p.line());
    IoError::Parse {
        line,
        column: 0,
        message: e.to_string(),
    }
}

pub fn read_csv<R: Read>(reader: R) -> Result<CountTable, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(csv_err)?,
        None => {
            return Err(IoError::Parse {
                line: 1,
                column: 1,
                message: "empty input".into(),
            })
        }
    };
    if header.get(0).map(str::trim) != Some("t") {
        return Err(IoError::Parse {
            line: 1,
            column: 1,
            message: "first header field must be `t`".into(),
        });
    }
    let sites: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    if sites.is_empty() {
        return Err(IoError::Parse {
            line: 1,
            column: 2,
            message: "no site columns".into(),
        });
    }
    let mut t = Vec::new();
    let mut counts = Vec::new();
    for (row, rec) in records.enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != sites.len() + 1 {
            return Err(IoError::RaggedRows {
                row: row + 1,
                found: rec.len().saturating_sub(1),
                expected: sites.len(),
            });
        }
        let field = |k: usize| rec.get(k).unwrap_or("").trim();
        let ti: f64 = field(0).parse().map_err(|e| IoError::Parse {
            line,
            column: 1,
            message: format!("exposure {:?}: {e}", field(0)),
        })?;
        t.push(ti);
        for k in 1..rec.len() {
            let v: i64 = field(k).parse().map_err(|e| IoError::Parse {
                line,
                column: k as u64 + 1,
                message: format!("count {:?}: {e}", field(k)),
            })?;
            if v < 0 {
                return Err(IoError::NegativeCount {
                    value: v,
                    at: format!("line {line}, column {}", k + 1),
                });
            }
            counts.push(v as u64);
        }
    }
    if t.is_empty() {
        return Err(IoError::Parse {
            line: 2,
            column: 1,
            message: "no data rows".into(),
        });
    }
    let grid = ExposureGrid::new(t, sites.len())?;
    let n = Array2::from_shape_vec((grid.days(), grid.sites()), counts).expect("row lengths checked");
    Ok(CountTable {
        grid,
        sites,
        n: Counts::new(n),
        y: None,
        m: None,
    })
}

#[derive(Deserialize)]
struct JsonTable {
    t: Vec<f64>,
    n: Vec<Vec<i64>>,
    #[serde(default)]
    sites: Option<Vec<String>>,
    #[serde(default)]
    y: Option<Vec<bool>>,
    #[serde(default)]
    m: Option<Vec<Vec<i64>>>,
}

fn json_counts(rows: &[Vec<i64>], what: &str, days: usize) -> Result<Counts, IoError> {
    if rows.len() != days {
        return Err(zipm_core::Error::DimensionMismatch(format!("{what} has {} rows for {days} days", rows.len())).into());
    }
    let width = rows.first().map_or(0, Vec::len);
    let mut flat = Vec::with_capacity(days * width);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(IoError::RaggedRows {
                row: i + 1,
                found: row.len(),
                expected: width,
            });
        }
        for (j, &v) in row.iter().enumerate() {
            if v < 0 {
                return Err(IoError::NegativeCount {
                    value: v,
                    at: format!("{what}[{i}][{j}]"),
                });
            }
            flat.push(v as u64);
        }
    }
    Ok(Counts::new(Array2::from_shape_vec((days, width), flat).expect("row lengths checked")))
}

pub fn parse_json(text: &str) -> Result<CountTable, IoError> {
    let raw: JsonTable = serde_json::from_str(text).map_err(|e| IoError::Parse {
        line: e.line() as u64,
        column: e.column() as u64,
        message: e.to_string(),
    })?;
    let n = json_counts(&raw.n, "n", raw.t.len())?;
    let grid = ExposureGrid::new(raw.t, n.sites())?;
    let m = raw.m.map(|m| json_counts(&m, "m", grid.days())).transpose()?;
    if let Some(m) = &m {
        grid.check_shape(&m.0, "m")?;
    }
    if let Some(y) = &raw.y {
        if y.len() != grid.sites() {
            return Err(zipm_core::Error::DimensionMismatch(format!("y has {} entries for {} sites", y.len(), grid.sites())).into());
        }
    }
    let sites = match raw.sites {
        Some(s) if s.len() == grid.sites() => s,
        Some(s) => {
            return Err(zipm_core::Error::DimensionMismatch(format!("{} site names for {} sites", s.len(), grid.sites())).into())
        }
        None => default_site_names(grid.sites()),
    };
    Ok(CountTable {
        grid,
        sites,
        n,
        y: raw.y,
        m,
    })
}

/// Writes the canonical CSV form; `read_csv` of the output gives the table
/// back and re-exporting reproduces the bytes.
pub fn write_csv<W: Write>(table: &CountTable, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(table.sites.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (i, &t) in table.grid.t().iter().enumerate() {
        let mut row = vec![fmt_f64(t)];
        row.extend(table.n.0.row(i).iter().map(u64::to_string));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| IoError::File {
        path: PathBuf::from("<output>"),
        source,
    })
}

/// JSON fields of a table, in the layout `parse_json` reads.
#[derive(Debug, Clone, Serialize)]
pub struct TableJson {
    pub t: Vec<f64>,
    pub sites: Vec<String>,
    pub n: Vec<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<bool>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<Vec<u64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<Vec<bool>>>,
}

pub fn rows<T: Clone>(a: &Array2<T>) -> Vec<Vec<T>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

impl TableJson {
    pub fn from_table(table: &CountTable) -> Self {
        Self {
            t: table.grid.t().to_vec(),
            sites: table.sites.clone(),
            n: rows(&table.n.0),
            y: table.y.clone(),
            m: table.m.as_ref().map(|m| rows(&m.0)),
            z: None,
        }
    }
}
