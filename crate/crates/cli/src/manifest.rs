//! `run.toml`: what a command did, with which inputs, and what it wrote.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;

pub const MANIFEST_FILE: &str = "run.toml";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub started: String,
    pub finished: String,
    pub config_paths: Vec<String>,
    pub seeds: BTreeMap<String, u64>,
    pub parameters: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn start(command: &str, started: DateTime<Utc>) -> Self {
        Self {
            command: command.to_string(),
            version: version_string(),
            started: started.to_rfc3339_opts(SecondsFormat::Secs, true),
            finished: String::new(),
            config_paths: Vec::new(),
            seeds: BTreeMap::new(),
            parameters: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.parameters.insert(key.to_string(), value.to_string());
        self
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Stamps the finish time and writes the manifest into `dir`.
    pub fn write(mut self, dir: &Path) -> anyhow::Result<PathBuf> {
        self.finished = Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true);
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, toml::to_string(&self)?)?;
        Ok(path)
    }
}

/// Crate version, with `git describe` appended when available.
fn version_string() -> String {
    let version = env!("CARGO_PKG_VERSION");
    let described = Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    match described {
        Some(d) => format!("{version} ({d})"),
        None => version.to_string(),
    }
}

/// Reads one parameter back from a manifest written by `gen-data`.
pub fn read_parameter(dir: &Path, key: &str) -> Option<String> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?;
    let table: toml::Table = text.parse().ok()?;
    table.get("parameters")?.get(key)?.as_str().map(String::from)
}
