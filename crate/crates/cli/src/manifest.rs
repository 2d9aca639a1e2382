use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const FILE_NAME: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub args: Vec<String>,
    /// SHA-256 of the resolved configuration JSON.
    pub config_hash: Option<String>,
    pub started: String,
    pub finished: String,
    pub exit_status: i32,
    pub error: Option<String>,
    /// Output file name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn begin(command: &str, args: Vec<String>) -> Self {
        Self {
            tool: env!("CARGO_BIN_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            args,
            config_hash: None,
            started: now(),
            finished: String::new(),
            exit_status: 0,
            error: None,
            outputs: BTreeMap::new(),
        }
    }

    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        self.outputs.insert(name, sha256_hex(&bytes));
        Ok(())
    }

    /// Writes `manifest.json` through a temporary file and a rename.
    pub fn finish(mut self, dir: &Path, exit_status: i32, error: Option<String>) -> Result<()> {
        self.finished = now();
        self.exit_status = exit_status;
        self.error = error;
        let tmp = dir.join(format!(".{FILE_NAME}.tmp"));
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        fs::write(&tmp, text).with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, dir.join(FILE_NAME)).with_context(|| format!("renaming {}", tmp.display()))?;
        Ok(())
    }
}
