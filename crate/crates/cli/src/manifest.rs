//! Run manifests: one JSON record per artifact-producing command, written
//! next to the primary output as `<out>.manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use adaptrl_core::seeds::digest_hex;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<FileDigest, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Ok(FileDigest {
            path: path.to_path_buf(),
            sha256: digest_hex(&bytes),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// The effective settings, after defaults and generated seeds.
    pub settings: serde_json::Value,
    /// SHA-256 of `settings` in its serialized form.
    pub config_digest: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_unix: f64,
    pub finished_unix: f64,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Collects what a run read and wrote, then writes the manifest.
#[derive(Debug)]
pub struct Recorder {
    command: String,
    started: f64,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn start(command: &str) -> Recorder {
        Recorder {
            command: command.to_string(),
            started: now(),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    /// Refuse to overwrite anything this run reads.
    pub fn check_output(&self, out: &Path) -> Result<(), CliError> {
        let same = |a: &Path| match (fs::canonicalize(a), fs::canonicalize(out)) {
            (Ok(x), Ok(y)) => x == y,
            _ => a == out,
        };
        if self.inputs.iter().any(|p| same(p)) {
            return Err(CliError::Input(format!("{} is also an input", out.display())));
        }
        Ok(())
    }

    pub fn finish(self, settings: serde_json::Value, outputs: &[&Path]) -> Result<PathBuf, CliError> {
        let settings_text = serde_json::to_string(&settings).map_err(|e| CliError::Internal(e.to_string()))?;
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: digest_hex(settings_text.as_bytes()),
            settings,
            seeds: self.seeds,
            inputs: self.inputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_, _>>()?,
            outputs: outputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_, _>>()?,
            started_unix: self.started,
            finished_unix: now(),
        };
        let path = manifest_path(outputs[0]);
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Internal(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".manifest.json");
    PathBuf::from(name)
}
