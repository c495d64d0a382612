//! Dataset manifest.
//!
//! ```json
//! {
//!   "scenes": [
//!     {
//!       "id": "desk",
//!       "role": "train",
//!       "pattern": "90,45;135,0",
//!       "channels": {"i0": "desk/desk_000.pgm", "i45": "...", "i90": "...", "i135": "..."},
//!       "bit_depth": 16,
//!       "notes": "indoor"
//!     }
//!   ]
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory. Without
//! `channels`, the files are `<id>/<id>_000.pgm` and so on (or `.pfm`).

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pfa::{PfaPattern, PolAngle, PolStack};
use crate::scalar::Scalar;

use super::stack::{read_plane, read_plane_dims};
use super::{write_atomic, ReadLimits};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneRole {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelPaths {
    pub i0: PathBuf,
    pub i45: PathBuf,
    pub i90: PathBuf,
    pub i135: PathBuf,
}

impl ChannelPaths {
    pub fn get(&self, a: PolAngle) -> &Path {
        match a {
            PolAngle::Deg0 => &self.i0,
            PolAngle::Deg45 => &self.i45,
            PolAngle::Deg90 => &self.i90,
            PolAngle::Deg135 => &self.i135,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub id: String,
    pub role: SceneRole,
    #[serde(default)]
    pub pattern: PfaPattern,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<ChannelPaths>,
    #[serde(default = "default_bit_depth")]
    pub bit_depth: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

fn default_bit_depth() -> u32 {
    16
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub scenes: Vec<SceneEntry>,
    /// Directory relative paths resolve against; not serialized.
    #[serde(skip)]
    pub base: PathBuf,
}

impl DatasetManifest {
    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    pub fn with_role(&self, role: SceneRole) -> impl Iterator<Item = &SceneEntry> {
        self.scenes.iter().filter(move |s| s.role == role)
    }

    /// Absolute (or base-relative) channel paths for a scene.
    pub fn channel_paths(&self, scene: &SceneEntry) -> ChannelPaths {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { self.base.join(p) };
        match &scene.channels {
            Some(c) => ChannelPaths {
                i0: resolve(&c.i0),
                i45: resolve(&c.i45),
                i90: resolve(&c.i90),
                i135: resolve(&c.i135),
            },
            None => {
                let dir = self.base.join(&scene.id);
                let pick = |a: PolAngle| {
                    let pgm = dir.join(format!("{}_{}.pgm", scene.id, a.suffix()));
                    if pgm.exists() {
                        pgm
                    } else {
                        dir.join(format!("{}_{}.pfm", scene.id, a.suffix()))
                    }
                };
                ChannelPaths {
                    i0: pick(PolAngle::Deg0),
                    i45: pick(PolAngle::Deg45),
                    i90: pick(PolAngle::Deg90),
                    i135: pick(PolAngle::Deg135),
                }
            }
        }
    }

    /// Checks ids, file existence and per-scene dimension agreement.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for scene in &self.scenes {
            let err = |message: String| Error::Manifest {
                scene: scene.id.clone(),
                message,
            };
            if scene.id.is_empty() {
                return Err(err("empty scene id".into()));
            }
            if !seen.insert(scene.id.as_str()) {
                return Err(err("scene id listed more than once".into()));
            }
            if !(1..=32).contains(&scene.bit_depth) {
                return Err(err(format!("bit depth {} is out of range", scene.bit_depth)));
            }
            let paths = self.channel_paths(scene);
            let mut dims = None;
            for a in PolAngle::ALL {
                let p = paths.get(a);
                if !p.is_file() {
                    return Err(err(format!("channel file {} does not exist", p.display())));
                }
                let d = read_plane_dims(p).map_err(|e| err(e.to_string()))?;
                match dims {
                    None => dims = Some(d),
                    Some(prev) if prev != d => {
                        return Err(err(format!(
                            "channel {} is {}x{}, others are {}x{}",
                            a.degrees(),
                            d.0,
                            d.1,
                            prev.0,
                            prev.1
                        )));
                    }
                    _ => {}
                }
            }
        }
        if self.is_empty() {
            log::warn!("manifest lists no scenes");
        }
        Ok(())
    }

    pub fn load_scene<T: Scalar>(&self, scene: &SceneEntry, limits: &ReadLimits) -> Result<PolStack<T>> {
        let paths = self.channel_paths(scene);
        let err = |e: Error| Error::Manifest {
            scene: scene.id.clone(),
            message: e.to_string(),
        };
        let planes = PolAngle::ALL
            .iter()
            .map(|&a| read_plane(paths.get(a), limits))
            .collect::<Result<Vec<_>>>()
            .map_err(err)?;
        let [a, b, c, d]: [_; 4] = planes.try_into().map_err(|_| Error::contract("four planes"))?;
        PolStack::new(a, b, c, d).map_err(err)
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut m: DatasetManifest = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    m.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    m.validate()?;
    Ok(m)
}

pub fn save_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
