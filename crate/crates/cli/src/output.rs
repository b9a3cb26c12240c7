//! JSON and CSV writers. JSON matrices are arrays of rows; CSV files start
//! with `#` comment lines describing the columns.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::CliResult;

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub struct CsvWriter {
    out: BufWriter<File>,
}

impl CsvWriter {
    pub fn create(path: &Path, comments: &[String], columns: &[&str]) -> CliResult<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "{}", columns.join(","))?;
        Ok(Self { out })
    }

    pub fn row(&mut self, fields: &[String]) -> CliResult<()> {
        writeln!(self.out, "{}", fields.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn num(x: f64) -> String {
    format!("{x}")
}
