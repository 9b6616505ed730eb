//! Output directory writer: atomic temp-then-rename writes, a config-hash header on every
//! file and a manifest listing every emitted file.

use std::fs;
use std::path::{Path, PathBuf};

use mcre_core::report::Table;
use serde_json::{json, Map, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug)]
pub struct Output {
    dir: PathBuf,
    hash: String,
    experiment: String,
    files: Vec<(String, Option<usize>)>,
    summary: Map<String, Value>,
}

fn atomic_write(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let dst = dir.join(name);
    let io = |e: std::io::Error| CliError::Runtime(format!("writing {}: {e}", dst.display()));
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, &dst).map_err(io)
}

impl Output {
    pub fn new(dir: &Path, hash: String, experiment: &str) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("creating {}: {e}", dir.display())))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            hash,
            experiment: experiment.to_string(),
            files: Vec::new(),
            summary: Map::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// CSV body preceded by a `# config_hash: <sha256>` line.
    pub fn table(&mut self, name: &str, table: &Table) -> CliResult<()> {
        let text = format!("# config_hash: {}\n{}", self.hash, table.to_csv());
        atomic_write(&self.dir, name, &text)?;
        self.files.push((name.to_string(), Some(table.rows.len())));
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: Value) -> CliResult<()> {
        let doc = json!({ "config_hash": self.hash, "data": value });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
        atomic_write(&self.dir, name, &text)?;
        self.files.push((name.to_string(), None));
        Ok(())
    }

    pub fn summary(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    /// Write `manifest.json`; every other file written through this writer is listed.
    pub fn finish(self) -> CliResult<PathBuf> {
        let files: Vec<Value> = self
            .files
            .iter()
            .map(|(n, r)| json!({ "name": n, "rows": r }))
            .collect();
        let doc = json!({
            "experiment": self.experiment,
            "config_hash": self.hash,
            "files": files,
            "summary": Value::Object(self.summary),
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
        atomic_write(&self.dir, "manifest.json", &text)?;
        Ok(self.dir)
    }
}

pub fn to_value<T: serde::Serialize>(v: &T) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| CliError::Runtime(e.to_string()))
}
