//! Artifact writers. Every file carries the config hash, master seed and
//! artifact version; CSV files carry them as leading `#` lines.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Self {
            config_hash,
            seed,
            version: VERSION.to_string(),
        }
    }
}

/// Prints a status line, tolerating a closed stdout.
pub fn say(line: impl std::fmt::Display) {
    use std::io::Write as _;
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn write(path: &Path, contents: &str) -> Result<PathBuf, CliError> {
    fs::write(path, contents).map_err(|e| io_error(path, e))?;
    Ok(path.to_path_buf())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_error(path, e))?;
    text.push('\n');
    write(path, &text)
}

pub fn write_json_lines<T: Serialize>(path: &Path, values: &[T]) -> Result<PathBuf, CliError> {
    let mut text = String::new();
    for v in values {
        text.push_str(&serde_json::to_string(v).map_err(|e| io_error(path, e))?);
        text.push('\n');
    }
    write(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_error(path, format!("malformed input: {e}")))
}

pub fn read_json_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| io_error(path, format!("malformed input on line {}: {e}", i + 1)))
        })
        .collect()
}

/// CSV with provenance comment lines, a header row and pre-formatted rows.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(provenance: &Provenance, columns: &[&str]) -> Self {
        let mut text = String::new();
        let _ = writeln!(text, "# config_hash={}", provenance.config_hash);
        let _ = writeln!(text, "# seed={}", provenance.seed);
        let _ = writeln!(text, "# version={}", provenance.version);
        text.push_str(&columns.join(","));
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn save(&self, path: &Path) -> Result<PathBuf, CliError> {
        write(path, &self.text)
    }
}
