use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::Failure;

/// Provenance block embedded in every output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: Value,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance_hash: Option<String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seeds: Vec<u64>) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seeds,
            instance_hash: None,
            outputs: Vec::new(),
        }
    }

    /// Leading comment line for CSV outputs.
    pub fn csv_line(&self) -> String {
        format!("# manifest: {}\n", serde_json::to_string(self).expect("manifest serializes"))
    }
}

/// Git-style blob hash: SHA-256 of `"blob <len>\0"` followed by the content.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn write_csv(path: &Path, manifest: &RunManifest, body: &str) -> Result<(), Failure> {
    write(path, format!("{}{}", manifest.csv_line(), body))
}

/// Writes `body` (a JSON object) with the manifest as its first field.
pub fn write_json(path: &Path, manifest: &RunManifest, body: Value) -> Result<(), Failure> {
    let mut out = json!({ "manifest": manifest });
    if let (Some(dst), Value::Object(src)) = (out.as_object_mut(), body) {
        dst.extend(src);
    }
    write(path, serde_json::to_string_pretty(&out).expect("output serializes") + "\n")
}

fn write(path: &Path, text: String) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}
