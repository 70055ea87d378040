//! Report emission.  Every JSON document carries `schema_version`, the
//! command that produced it and the effective configuration.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::IoError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub schema_version: u32,
    pub command: String,
    pub config: serde_json::Value,
    #[serde(flatten)]
    pub body: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &str, config: &impl Serialize, body: T) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config: serde_json::to_value(config).expect("config serializes"),
            body,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    let err = |source| IoError::File {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(err)?;
    }
    File::create(path).map(BufWriter::new).map_err(err)
}

pub fn write_json<T: Serialize>(path: &Path, doc: &T) -> Result<(), IoError> {
    let mut w = create(path)?;
    let err = |source| IoError::File {
        path: path.to_path_buf(),
        source,
    };
    serde_json::to_writer_pretty(&mut w, doc).map_err(|e| err(e.into()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(err)
}

/// A CSV table; with no rows the file holds just the header.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e: csv::Error| IoError::File {
        path: path.to_path_buf(),
        source: e.into(),
    };
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.flush().map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}
