//! Image files, dataset manifests and capture preprocessing.

mod manifest;
mod netpbm;
mod pfm;
mod png_out;
mod preprocess;
mod stack;

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub use manifest::{load_manifest, save_manifest, ChannelPaths, DatasetManifest, SceneEntry, SceneRole};
pub use netpbm::{decode_pgm, encode_pgm};
pub use pfm::{decode_pfm, encode_pfm};
pub use png_out::{encode_png, write_png};
pub use preprocess::{bin2x2, frame_average};
pub use stack::{
    read_plane, read_plane_dims, read_stack_dir, write_plane, write_stack_dir, write_stokes_dir, ImageFormat,
    STOKES_FILES,
};

/// Default reader budget: 512 MiB worth of 8-byte samples.
pub const DEFAULT_MAX_SAMPLES: usize = 512 * 1024 * 1024 / 8;

/// Size limits applied by every reader before allocating.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReadLimits {
    pub max_samples: usize,
}

impl Default for ReadLimits {
    fn default() -> Self {
        Self {
            max_samples: DEFAULT_MAX_SAMPLES,
        }
    }
}

impl ReadLimits {
    pub(crate) fn check(&self, width: usize, height: usize) -> Result<()> {
        match width.checked_mul(height) {
            Some(n) if n <= self.max_samples => Ok(()),
            _ => Err(Error::DimensionOverflow {
                width,
                height,
                limit: self.max_samples,
            }),
        }
    }
}

/// Writes `bytes` to a temporary sibling and renames it over `path`, so an
/// interrupted write never leaves a truncated file behind. Missing parent
/// directories are created.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidInput, "no file name")))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Splits off a Netpbm-style header: `count` whitespace-separated tokens,
/// `#` comments allowed, followed by exactly one whitespace byte.
pub(crate) fn header_tokens(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut pos = 0;
    while tokens.len() < count {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Truncated("header ends early".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if pos >= bytes.len() {
        return Err(Error::Truncated("no data after header".into()));
    }
    // Exactly one separator byte precedes the raster.
    Ok((tokens, pos + 1))
}

pub(crate) fn parse_dim(token: &str, what: &str) -> Result<usize> {
    match token.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(Error::Header(format!("{what} `{token}` is not a positive integer"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.bin");
        write_atomic(&p, b"first").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"second");
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
        let nested = dir.path().join("missing/deeper/out.bin");
        write_atomic(&nested, b"x").unwrap();
        assert_eq!(fs::read(&nested).unwrap(), b"x");
        assert!(write_atomic(&p.join("under-a-file.bin"), b"x").is_err());
    }

    #[test]
    fn limits() {
        let l = ReadLimits { max_samples: 100 };
        assert!(l.check(10, 10).is_ok());
        assert!(matches!(l.check(10, 11), Err(Error::DimensionOverflow { .. })));
        assert!(l.check(usize::MAX, 2).is_err());
    }
}
