//! Output artifacts: atomic writes and embedded provenance metadata.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactMeta {
    pub tool_version: String,
    /// SHA-256 of the input configuration file bytes.
    pub config_sha256: String,
    pub seed: u64,
    /// Fully resolved configuration echo (TOML).
    pub resolved_config: String,
    /// Wall-clock stamp; the only field allowed to differ between reruns.
    pub generated_unix_ms: u128,
}

impl ArtifactMeta {
    pub fn new(config_bytes: &[u8], seed: u64, resolved_config: String) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(config_bytes);
        let config_sha256 = hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        ArtifactMeta {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256,
            seed,
            resolved_config,
            generated_unix_ms: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
        }
    }

    /// One-line comment header for CSV artifacts.
    pub fn csv_comment(&self) -> String {
        format!(
            "# percohom v{} seed={} config_sha256={}\n",
            self.tool_version, self.seed, self.config_sha256
        )
    }
}

/// Write via a temporary file and an atomic rename: an interrupted run never
/// leaves a partial final artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = PathBuf::from(path);
    let file_name = tmp
        .file_name()
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_else(|| "artifact".into());
    tmp.set_file_name(format!(".{file_name}.tmp"));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

/// Serialize a report to JSON with the metadata merged in as a `meta` key,
/// keeping the report's own keys at the top level.
pub fn json_with_meta<T: Serialize>(report: &T, meta: &ArtifactMeta) -> serde_json::Value {
    let mut value = serde_json::to_value(report).expect("report serialization");
    if let serde_json::Value::Object(map) = &mut value {
        map.insert(
            "meta".into(),
            serde_json::to_value(meta).expect("meta serialization"),
        );
    }
    value
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json to string");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
