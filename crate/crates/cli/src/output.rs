//! Output directory handling. Floats are written in their shortest
//! round-trip form so reruns are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::manifest::{sha256_hex, FileHash, RunManifest};
use crate::{CliError, CliResult};

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::I(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => fmt_f64(*v),
            Cell::I(v) => v.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> CliResult<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Usage(format!("csv: {e}"));
        w.write_record(&self.headers).map_err(err)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render)).map_err(err)?;
        }
        w.into_inner().map_err(|e| CliError::Usage(format!("csv: {e}")))
    }
}

/// Collects the files written by one command.
#[derive(Debug)]
pub struct OutputDir {
    pub dir: PathBuf,
    pub svg: bool,
    written: Vec<FileHash>,
}

impl OutputDir {
    pub fn create(dir: &Path, svg: bool) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            svg,
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
        self.written.retain(|f| f.path != name);
        self.written.push(FileHash {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, table: &Table) -> CliResult<()> {
        let bytes = table.to_csv()?;
        self.write_bytes(name, &bytes)
    }

    /// Pretty JSON with a trailing newline.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(format!("json: {e}")))?;
        s.push('\n');
        self.write_bytes(name, s.as_bytes())
    }

    /// Written only when plots are enabled.
    pub fn write_svg(&mut self, name: &str, svg: &str) -> CliResult<()> {
        if self.svg {
            self.write_bytes(name, svg.as_bytes())?;
        }
        Ok(())
    }

    pub fn outputs(&self) -> &[FileHash] {
        &self.written
    }

    /// Writes `manifest.json` listing every output with its hash.
    pub fn finish(self, mut manifest: RunManifest) -> CliResult<()> {
        manifest.outputs = self.written.clone();
        let mut s = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Usage(format!("json: {e}")))?;
        s.push('\n');
        let p = self.path(crate::manifest::MANIFEST_FILE);
        fs::write(&p, s).map_err(|e| CliError::io(&p, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_roundtrip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0, 7.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new(&["a", "b", "c"]);
        t.push(vec![1.5.into(), 2usize.into(), "x,y".into()]);
        let s = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(s, "a,b,c\n1.5,2,\"x,y\"\n");
    }
}
