//! JSON metadata written next to every mosaic and weight file.

use std::path::{Path, PathBuf};

use polarmosaic::dataio::write_atomic;
use polarmosaic::train::{LossWeights, TrainConfig};
use polarmosaic::{Error, PfaPattern, PpdnConfig, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArtifactKind {
    Mosaic,
    Weights,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub kind: ArtifactKind,
    pub pattern: PfaPattern,
    pub tool: String,
    /// Input the artifact was made from, as given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<PpdnConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_weights: Option<LossWeights>,
    /// Optimizer steps taken when the weights were written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<u64>,
    #[serde(default)]
    pub deterministic: bool,
}

impl Sidecar {
    pub fn new(kind: ArtifactKind, pattern: PfaPattern) -> Self {
        Self {
            kind,
            pattern,
            tool: concat!("polarmosaic ", env!("CARGO_PKG_VERSION")).to_string(),
            source: None,
            network: None,
            train: None,
            loss_weights: None,
            step: None,
            deterministic: false,
        }
    }
}

/// `scene.pfm` -> `scene.pfm.json`.
pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write(artifact: &Path, meta: &Sidecar) -> Result<()> {
    let path = sidecar_path(artifact);
    let mut bytes = serde_json::to_vec_pretty(meta).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    bytes.push(b'\n');
    write_atomic(&path, &bytes)
}

/// `Ok(None)` when the artifact has no sidecar.
pub fn read(artifact: &Path) -> Result<Option<Sidecar>> {
    let path = sidecar_path(artifact);
    let bytes = match std::fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::Io { path, source: e }),
    };
    serde_json::from_slice(&bytes)
        .map(Some)
        .map_err(|e| Error::Json { path, source: e })
}
