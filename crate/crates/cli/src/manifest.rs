use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use zbnn::io::{file_sha256, write_json};

use crate::Failure;

pub const SCHEMA_VERSION: u32 = 1;

/// Any JSON report, tagged with the schema version at top level.
#[derive(Serialize)]
pub struct Report<'a, T: Serialize> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: &'a T,
}

pub fn write_report<T: Serialize>(path: &Path, body: &T) -> Result<(), Failure> {
    Ok(write_json(path, &Report { schema_version: SCHEMA_VERSION, body })?)
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub config: serde_json::Value,
    /// path → sha256
    pub input_digests: BTreeMap<String, String>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    pub started_unix: u64,
    pub wall_time_secs: f64,
    pub exit_status: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config: serde_json::Value::Null,
            input_digests: BTreeMap::new(),
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            wall_time_secs: 0.0,
            exit_status: 0,
            error: None,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), Failure> {
        let digest = file_sha256(path)?;
        self.input_digests.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn set_config<T: Serialize>(&mut self, config: &T) {
        self.config = serde_json::to_value(config).unwrap_or(serde_json::Value::Null);
    }
}

/// `<out>.manifest.json` next to the primary artifact.
pub fn manifest_path(out: &Path) -> PathBuf {
    sibling(out, "manifest.json")
}

/// `<out>.<suffix>`, keeping the original file name intact.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    out.with_file_name(name)
}
