//! File helpers and the run manifest written next to every output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use bss_core::sha256_hex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

/// Parses a TOML or JSON document, chosen by file extension.
pub fn parse_document<T: DeserializeOwned>(path: &Path, bytes: &[u8]) -> CliResult<T> {
    let bad = |e: String| CliError::Config(format!("{}: {e}", path.display()));
    if path.extension().is_some_and(|e| e == "toml") {
        let text = std::str::from_utf8(bytes).map_err(|e| bad(e.to_string()))?;
        toml::from_str(text).map_err(|e| bad(e.to_string()))
    } else {
        serde_json::from_slice(bytes).map_err(|e| bad(e.to_string()))
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("output serializes");
    bytes.push(b'\n');
    bytes
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    /// SHA-256 of every input file, by role.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every output file, by file name.
    pub outputs: BTreeMap<String, String>,
}

/// Collects output files and writes them, plus the manifest, to a directory.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
    inputs: BTreeMap<String, String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_owned(),
            files: Vec::new(),
            inputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, role: &str, bytes: &[u8]) {
        self.inputs.insert(role.to_owned(), sha256_hex(bytes));
    }

    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_owned(), bytes));
    }

    pub fn write<C: Serialize>(
        self,
        command: &str,
        seed: Option<u64>,
        config: &C,
    ) -> CliResult<()> {
        fs::create_dir_all(&self.dir)
            .map_err(|e| CliError::Input(format!("cannot create {}: {e}", self.dir.display())))?;
        let mut outputs = BTreeMap::new();
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            fs::write(&path, bytes)
                .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
            outputs.insert(name.clone(), sha256_hex(bytes));
        }
        let manifest = RunManifest {
            command: command.to_owned(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            seed,
            config: serde_json::to_value(config).map_err(|e| CliError::Internal(e.to_string()))?,
            inputs: self.inputs,
            outputs,
        };
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, to_json(&manifest))
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
    }
}

/// Writes to stdout; a closed pipe is not an error worth failing over.
pub fn print_stdout(bytes: &[u8]) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(bytes).and_then(|_| out.flush());
}

pub fn print_stderr(text: &str) {
    use std::io::Write;
    let _ = std::io::stderr().lock().write_all(text.as_bytes());
}
