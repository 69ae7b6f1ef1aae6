//! Reproducibility manifests and atomic file output.
//!
//! Every command writes a `manifest.json` recording the config digest, the
//! effective seed, the artifact version and the produced files, so a run
//! can be reproduced byte for byte (timing fields excluded) from the
//! manifest alone.

use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Metadata written alongside every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    /// Subcommand that produced the outputs.
    pub command: String,
    /// SHA-256 of the raw config document.
    pub config_sha256: String,
    /// Effective seed after flag overrides.
    pub seed: u64,
    /// Version of the producing binary.
    pub version: String,
    /// Total wall time in seconds.
    pub wall_time_s: f64,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
    /// Certification outcome, for commands that establish one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certified: Option<bool>,
}

impl RunManifest {
    pub fn new(command: &str, config_bytes: &[u8], seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config_sha256: sha256_hex(config_bytes),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: 0.0,
            outputs: Vec::new(),
            certified: None,
        }
    }

    /// Serialises and writes `manifest.json` into `dir` atomically.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Runtime(format!("serialising manifest: {e}")))?;
        write_atomic(&dir.join("manifest.json"), text.as_bytes())
            .map_err(|e| CliError::Runtime(format!("writing manifest: {e}")))
    }
}

/// Hex-encoded SHA-256 digest.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes via a sibling temp file plus rename so readers never observe a
/// partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// [`write_atomic`] adapted to command error handling.
pub fn write_output(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(&dir.join(name), bytes)
        .map_err(|e| CliError::Runtime(format!("writing {name}: {e}")))
}
