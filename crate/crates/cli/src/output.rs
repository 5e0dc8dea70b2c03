//! Files are staged in memory and written once at the end, each through a temporary file in the
//! output directory that is renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    pub fn add_csv(&mut self, name: &str, table: CsvTable) -> Result<()> {
        self.add(name, table.finish()?);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn write_all(self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut written = Vec::new();
        for (name, bytes) in self.files {
            let path = dir.join(&name);
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(&bytes)?;
            tmp.as_file().sync_all()?;
            tmp.persist(&path).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// CSV with a fixed header; every row gets the config hash appended.
pub struct CsvTable {
    writer: csv::Writer<Vec<u8>>,
    hash: String,
}

impl CsvTable {
    pub fn new(header: &[&str], hash: &str) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut h: Vec<&str> = header.to_vec();
        h.push("config_hash");
        writer.write_record(&h)?;
        Ok(CsvTable { writer, hash: hash.to_string() })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        let mut r = fields.to_vec();
        r.push(self.hash.clone());
        self.writer.write_record(&r)?;
        Ok(())
    }

    fn finish(self) -> Result<Vec<u8>> {
        Ok(self.writer.into_inner().map_err(|e| anyhow::anyhow!(e.to_string()))?)
    }
}

/// Shortest round-trip decimal form; empty for None.
pub fn fmt(v: f64) -> String {
    format!("{v:e}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

/// log10 of positive values, empty otherwise.
pub fn fmt_log(v: f64) -> String {
    if v > 0.0 {
        fmt(v.log10())
    } else {
        String::new()
    }
}

pub fn join(v: &[f64]) -> String {
    v.iter().map(|x| fmt(*x)).collect::<Vec<_>>().join(";")
}
