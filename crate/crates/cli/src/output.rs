//! Artifact directory: CSV tables, JSON-lines tables, resolved config and a
//! plain-text manifest. One writer per run; files are written in order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gibbsdyn::Estimate;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

pub const MANIFEST: &str = "manifest.txt";
pub const CONFIG: &str = "config.toml";

pub struct Artifacts {
    dir: PathBuf,
    pub seed: u64,
    pub hash: String,
    outputs: Vec<String>,
    notes: Vec<(String, String)>,
}

/// `stderr` column: a number, or `exact` for exactly known values.
pub fn stderr_field(e: &Estimate) -> String {
    if e.is_exact() {
        "exact".to_string()
    } else {
        e.stderr.to_string()
    }
}

impl Artifacts {
    pub fn create(dir: &Path, config: &ExperimentConfig) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(CONFIG), config.to_toml())?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            seed: config.seed,
            hash: config.hash(),
            outputs: Vec::new(),
            notes: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `rows` as CSV with a header taken from the row type.
    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(self.dir.join(name)).map_err(|e| CliError::Io(e.to_string()))?;
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.flush()?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn jsonl<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut w = BufWriter::new(fs::File::create(self.dir.join(name))?);
        for r in rows {
            serde_json::to_writer(&mut w, r).map_err(|e| CliError::Io(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(self.dir.join(name), text + "\n")?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    /// A `key = value` line for the manifest.
    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.to_string(), value.to_string()));
    }

    pub fn finish(self, subcommand: &str) -> Result<PathBuf, CliError> {
        let mut text = String::new();
        text.push_str(&format!("subcommand = {subcommand}\n"));
        text.push_str(&format!("seed = {}\n", self.seed));
        text.push_str(&format!("config_hash = {}\n", self.hash));
        text.push_str(&format!("config = {CONFIG}\n"));
        text.push_str(&format!("version = {}\n", env!("CARGO_PKG_VERSION")));
        text.push_str(&format!("outputs = {}\n", self.outputs.join(",")));
        for (k, v) in &self.notes {
            text.push_str(&format!("{k} = {v}\n"));
        }
        let path = self.dir.join(MANIFEST);
        fs::write(&path, text)?;
        Ok(path)
    }
}

/// Parsed `key = value` manifest.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(dir.join(MANIFEST)).map_err(|e| CliError::Replay(format!("cannot read manifest: {e}")))?;
        let entries = text
            .lines()
            .filter_map(|l| l.split_once(" = ").map(|(k, v)| (k.trim().to_string(), v.trim().to_string())))
            .collect();
        Ok(Manifest { entries })
    }

    pub fn get(&self, key: &str) -> Result<&str, CliError> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| CliError::Replay(format!("manifest has no `{key}` entry")))
    }

    pub fn outputs(&self) -> Result<Vec<String>, CliError> {
        Ok(self.get("outputs")?.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect())
    }
}
