//! The run manifest: everything needed to reproduce a run in replay mode
//! — resolved config with provenance, dataset and cassette digests, and a
//! digest of every artifact the run wrote.

use crate::error::CliError;
use bloomloop::domain::RunConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Path as the run referred to it: artifact paths are relative to the
    /// run directory, the dataset path is as passed on the command line.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub harness_version: String,
    pub created_at: String,
    /// Subcommand that produced this run.
    pub command: String,
    pub provider_mode: String,
    pub model_label: String,
    pub config: RunConfig,
    /// Field → flag | config-file | protocol | harness-default.
    pub config_provenance: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<FileDigest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cassette: Option<FileDigest>,
    /// Artifacts written by the run, sorted by path.
    pub outputs: Vec<FileDigest>,
    pub interrupted: bool,
    /// Dataset was loaded leniently (skip bad records) rather than strictly.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub lenient: bool,
    /// synth-bad only: how many problems were requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth_count: Option<usize>,
    /// synth-bad only: whether generation failed fast on a bad slot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth_fail_fast: Option<bool>,
    /// Judge template directory override used by the run, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates_dir: Option<String>,
    /// Refinement prompt file override used by the run, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine_prompt: Option<String>,
}

impl Manifest {
    pub fn write_to(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self).expect("manifests always serialize");
        std::fs::write(&path, json + "\n")
            .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
    }

    pub fn load(dir: &Path) -> Result<Manifest, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("malformed manifest {}: {e}", path.display())))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// Digest `names` (paths relative to `dir`), returning entries sorted by
/// path so manifests are stable regardless of write order.
pub fn digest_outputs(dir: &Path, names: &[String]) -> Result<Vec<FileDigest>, CliError> {
    let mut outputs = Vec::with_capacity(names.len());
    for name in names {
        outputs.push(FileDigest {
            path: name.clone(),
            sha256: sha256_file(&dir.join(name))?,
        });
    }
    outputs.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(outputs)
}
