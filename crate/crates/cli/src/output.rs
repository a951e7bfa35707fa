//! Output files: CSV tables with unit-annotated headers and JSON sidecars.
//! Every file written is recorded so the manifest can inventory it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::HarnessError;

pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self, HarnessError> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Relative names of the files written so far, in order.
    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn table(&mut self, name: &str, header: &[&str]) -> Result<Table, HarnessError> {
        let path = self.path(name);
        let mut writer = csv::Writer::from_path(&path).map_err(|e| HarnessError::Csv(path.clone(), e))?;
        writer.write_record(header).map_err(|e| HarnessError::Csv(path.clone(), e))?;
        self.files.push(name.to_string());
        Ok(Table {
            writer,
            path,
            width: header.len(),
        })
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), HarnessError> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Registers a file written by other means.
    pub fn record(&mut self, name: &str) {
        self.files.push(name.to_string());
    }
}

pub struct Table {
    writer: csv::Writer<fs::File>,
    path: PathBuf,
    width: usize,
}

/// One CSV cell. Reals use the shortest representation that round-trips.
pub enum Cell<'a> {
    Real(f64),
    Int(i64),
    Text(&'a str),
}

impl From<f64> for Cell<'_> {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<i64> for Cell<'_> {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl<'a> From<&'a str> for Cell<'a> {
    fn from(v: &'a str) -> Self {
        Cell::Text(v)
    }
}

impl Table {
    pub fn row(&mut self, cells: &[Cell]) -> Result<(), HarnessError> {
        debug_assert_eq!(cells.len(), self.width);
        let fields = cells.iter().map(|c| match c {
            Cell::Real(v) => format!("{v:e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.to_string(),
        });
        self.writer
            .write_record(fields)
            .map_err(|e| HarnessError::Csv(self.path.clone(), e))
    }

    pub fn reals(&mut self, values: &[f64]) -> Result<(), HarnessError> {
        let cells: Vec<Cell> = values.iter().map(|&v| Cell::Real(v)).collect();
        self.row(&cells)
    }

    pub fn finish(mut self) -> Result<(), HarnessError> {
        self.writer.flush().map_err(|e| HarnessError::io(&self.path, e))
    }
}
