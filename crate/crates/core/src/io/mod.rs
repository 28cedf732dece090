//! Plain-text datasets, artifacts, models, reports and sweep tables.

mod artifact;
mod convert;
mod dataset;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

pub use artifact::{
    load_model, load_patch, read_report, save_model, save_patch, write_report, write_sweep_csv, SavedModel,
    ARTIFACT_HEADER, MODEL_HEADER, REPORT_HEADER,
};
pub use convert::{convert, ConvertSummary, InputFormat, SplitSizes};
pub use dataset::{
    load_dataset, load_dataset_full, write_dataset, DatasetDescriptor, FeatureSource, LoadedDataset, EDGES_FILE,
    FEATURES_FILE, NODES_FILE,
};

use crate::error::{GuapError, Result};

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| GuapError::io(path, e))
}

/// Writes through a sibling temporary file so readers never see a partial file.
pub(crate) fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| GuapError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| GuapError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| GuapError::io(path, e))
}

/// Line cursor that reports 1-based line numbers in parse errors.
pub(crate) struct Cursor<'a> {
    path: &'a Path,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(path: &'a Path, text: &'a str) -> Self {
        Self {
            path,
            lines: text.lines().enumerate(),
            line: 0,
        }
    }

    pub(crate) fn error(&self, message: impl Into<String>) -> GuapError {
        GuapError::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            message: message.into(),
        }
    }

    pub(crate) fn next_line(&mut self) -> Result<&'a str> {
        match self.lines.next() {
            Some((k, line)) => {
                self.line = k + 1;
                Ok(line)
            }
            None => {
                self.line += 1;
                Err(self.error("unexpected end of file"))
            }
        }
    }

    /// Next line as `key value`, checking the key.
    pub(crate) fn field(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        let (k, v) = line.split_once(' ').unwrap_or((line, ""));
        if k != key {
            return Err(self.error(format!("expected `{key}`, found `{k}`")));
        }
        Ok(v)
    }

    pub(crate) fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.field(key)?;
        v.parse()
            .map_err(|e| self.error(format!("bad value for `{key}`: {e}")))
    }

    pub(crate) fn list<T: std::str::FromStr>(&mut self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.field(key)?;
        v.split_whitespace()
            .map(|t| t.parse().map_err(|e| self.error(format!("bad entry `{t}` in `{key}`: {e}"))))
            .collect()
    }

    /// Reads a `matrix <name> <rows> <cols>` block.
    pub(crate) fn matrix(&mut self, name: &str) -> Result<Array2<f64>> {
        let line = self.next_line()?;
        let parts: Vec<&str> = line.split(' ').collect();
        let (rows, cols) = match parts.as_slice() {
            ["matrix", n, r, c] if *n == name => (
                r.parse::<usize>().map_err(|e| self.error(e.to_string()))?,
                c.parse::<usize>().map_err(|e| self.error(e.to_string()))?,
            ),
            _ => return Err(self.error(format!("expected `matrix {name} <rows> <cols>`"))),
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = self.next_line()?;
            let before = data.len();
            for t in line.split_whitespace() {
                data.push(t.parse::<f64>().map_err(|e| self.error(format!("bad number `{t}`: {e}")))?);
            }
            if data.len() - before != cols {
                return Err(self.error(format!("expected {cols} values, found {}", data.len() - before)));
            }
        }
        Ok(Array2::from_shape_vec((rows, cols), data).expect("row lengths checked"))
    }

    pub(crate) fn expect_end(&mut self) -> Result<()> {
        let line = self.next_line()?;
        if line != "end" {
            return Err(self.error("expected `end`"));
        }
        Ok(())
    }
}

/// Appends a matrix block. `Display` for `f64` is the shortest round-trip form.
pub(crate) fn push_matrix(out: &mut String, name: &str, a: &Array2<f64>) {
    let _ = writeln!(out, "matrix {name} {} {}", a.nrows(), a.ncols());
    for row in a.rows() {
        push_joined(out, row.iter());
        out.push('\n');
    }
}

pub(crate) fn push_joined<T: std::fmt::Display>(out: &mut String, items: impl Iterator<Item = T>) {
    for (k, x) in items.enumerate() {
        if k > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{x}");
    }
}
