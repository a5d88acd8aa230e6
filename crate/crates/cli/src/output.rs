//! Artifact writing: CSV data, a JSON summary embedding the claim under
//! test, the resolved config, and a manifest with the config hash. All
//! files are written once by the coordinator after the workers join, and
//! contain nothing nondeterministic, so a rerun from the manifest's config
//! is byte-identical.

use std::fs;
use std::path::PathBuf;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(path: &str) -> Result<Self, String> {
        let root = PathBuf::from(path);
        fs::create_dir_all(&root).map_err(|e| format!("cannot create {path}: {e}"))?;
        Ok(OutputDir { root })
    }

    pub fn write_csv(&self, name: &str, body: &str) -> Result<(), String> {
        // RFC 4180 line endings.
        let body = body.replace('\n', "\r\n");
        fs::write(self.root.join(name), body)
            .map_err(|e| format!("cannot write {name}: {e}"))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), String> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| format!("cannot serialize {name}: {e}"))?;
        fs::write(self.root.join(name), text)
            .map_err(|e| format!("cannot write {name}: {e}"))
    }

    /// Resolved config + plain-text manifest (config hash, seed, version,
    /// command). Rerunning the command with the written config reproduces
    /// every CSV byte for byte.
    pub fn write_manifest(
        &self,
        command: &str,
        config: &ExperimentConfig,
    ) -> Result<(), String> {
        let toml = config.to_toml();
        fs::write(self.root.join("resolved_config.toml"), &toml)
            .map_err(|e| format!("cannot write resolved_config.toml: {e}"))?;
        let mut hasher = Sha256::new();
        hasher.update(toml.as_bytes());
        let hash = hasher.finalize();
        let manifest = format!(
            "command: glstable {command}\nconfig: resolved_config.toml\nconfig_sha256: {}\nseed: {}\nversion: {}\n",
            hash.iter().map(|b| format!("{b:02x}")).collect::<String>(),
            config.seed,
            env!("CARGO_PKG_VERSION"),
        );
        fs::write(self.root.join("manifest.txt"), manifest)
            .map_err(|e| format!("cannot write manifest.txt: {e}"))
    }
}

/// Summary envelope: every command states the claim it probes and whether
/// its contracted checks passed.
#[derive(Debug, Serialize)]
pub struct Summary<T: Serialize> {
    pub command: String,
    /// The mathematical claim this experiment tests, in plain words.
    pub claim: String,
    pub passed: bool,
    pub checks: Vec<CheckLine>,
    pub result: T,
}

#[derive(Debug, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckLine {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        CheckLine {
            name: name.into(),
            passed,
            detail,
        }
    }
}

pub fn float_csv(v: f64) -> String {
    format!("{v:.12e}")
}
