//! Plane files by extension, and directories of channel or Stokes planes.
//!
//! A stack directory holds `<name>_000`, `<name>_045`, `<name>_090` and
//! `<name>_135` planes, all `.pfm` or all `.pgm`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pfa::{PolAngle, PolStack};
use crate::scalar::Scalar;
use crate::stokes::StokesMaps;
use crate::tensor::Plane;

use super::netpbm::{decode_pgm, encode_pgm, pgm_header};
use super::pfm::{decode_pfm, encode_pfm, pfm_header};
use super::{write_atomic, ReadLimits};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    Pfm,
    Pgm,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("pfm") => Ok(Self::Pfm),
            Some("pgm") => Ok(Self::Pgm),
            _ => Err(Error::UnsupportedFormat(format!(
                "{}: expected a .pfm or .pgm file",
                path.display()
            ))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Pfm => "pfm",
            Self::Pgm => "pgm",
        }
    }
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Io { .. } => e,
        other => Error::Header(format!("{}: {other}", path.display())),
    }
}

pub fn read_plane<T: Scalar>(path: &Path, limits: &ReadLimits) -> Result<Plane<T>> {
    let format = ImageFormat::from_path(path)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let r = match format {
        ImageFormat::Pfm => decode_pfm(&bytes, limits),
        ImageFormat::Pgm => decode_pgm(&bytes, limits),
    };
    // Keep the structured variants; only attach the path to their message.
    r.map_err(|e| match e {
        Error::Truncated(m) => Error::Truncated(format!("{}: {m}", path.display())),
        Error::Header(m) => Error::Header(format!("{}: {m}", path.display())),
        Error::UnsupportedFormat(m) => Error::UnsupportedFormat(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// `(height, width)` from the header alone.
pub fn read_plane_dims(path: &Path) -> Result<(usize, usize)> {
    use std::io::Read;
    let format = ImageFormat::from_path(path)?;
    let mut head = Vec::with_capacity(512);
    fs::File::open(path)
        .and_then(|f| f.take(512).read_to_end(&mut head))
        .map_err(|e| Error::io(path, e))?;
    let (w, h) = match format {
        ImageFormat::Pfm => pfm_header(&head).map(|(w, h, _, _)| (w, h)),
        ImageFormat::Pgm => pgm_header(&head).map(|(w, h, _, _)| (w, h)),
    }
    .map_err(|e| with_path(path, e))?;
    Ok((h, w))
}

pub fn write_plane<T: Scalar>(path: &Path, plane: &Plane<T>) -> Result<()> {
    let bytes = match ImageFormat::from_path(path)? {
        ImageFormat::Pfm => encode_pfm(plane),
        ImageFormat::Pgm => encode_pgm(plane),
    };
    write_atomic(path, &bytes)
}

fn channel_path(dir: &Path, name: &str, angle: PolAngle, ext: &str) -> PathBuf {
    dir.join(format!("{name}_{}.{ext}", angle.suffix()))
}

/// Finds the single `<name>_000.<ext>` in `dir`.
fn find_stack_name(dir: &Path) -> Result<(String, ImageFormat)> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        let Some(name) = stem.strip_suffix("_000") else { continue };
        if let Ok(fmt) = ImageFormat::from_path(&path) {
            found.push((name.to_string(), fmt));
        }
    }
    found.sort_by(|a, b| a.0.cmp(&b.0));
    match found.len() {
        1 => Ok(found.pop().expect("one")),
        0 => Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no <name>_000.pfm or .pgm channel file"),
        )),
        _ => Err(Error::Header(format!(
            "{}: several stacks present ({}); keep one per directory",
            dir.display(),
            found.iter().map(|f| f.0.as_str()).collect::<Vec<_>>().join(", ")
        ))),
    }
}

/// Reads a stack directory; returns the stack and its file name prefix.
pub fn read_stack_dir<T: Scalar>(dir: &Path, limits: &ReadLimits) -> Result<(PolStack<T>, String)> {
    let (name, fmt) = find_stack_name(dir)?;
    let planes = PolAngle::ALL
        .iter()
        .map(|&a| read_plane(&channel_path(dir, &name, a, fmt.extension()), limits))
        .collect::<Result<Vec<_>>>()?;
    let [a, b, c, d]: [Plane<T>; 4] = planes.try_into().map_err(|_| Error::contract("four planes"))?;
    let stack = PolStack::new(a, b, c, d).map_err(|e| Error::Dimension(format!("{}: {e}", dir.display())))?;
    Ok((stack, name))
}

pub fn write_stack_dir<T: Scalar>(dir: &Path, name: &str, stack: &PolStack<T>, format: ImageFormat) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for a in PolAngle::ALL {
        write_plane(&channel_path(dir, name, a, format.extension()), stack.channel(a))?;
    }
    Ok(())
}

pub const STOKES_FILES: [&str; 5] = ["s0", "s1", "s2", "dolp", "aolp"];

pub fn write_stokes_dir<T: Scalar>(dir: &Path, maps: &StokesMaps<T>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, plane) in STOKES_FILES.iter().zip([&maps.s0, &maps.s1, &maps.s2, &maps.dolp, &maps.aolp]) {
        write_plane(&dir.join(format!("{name}.pfm")), plane)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stack_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = PolStack::from_channels(std::array::from_fn(|c| Plane::filled(4, 6, 0.25 * c as f32))).unwrap();
        write_stack_dir(dir.path(), "scene", &s, ImageFormat::Pfm).unwrap();
        let (back, name) = read_stack_dir::<f32>(dir.path(), &ReadLimits::default()).unwrap();
        assert_eq!(name, "scene");
        assert_eq!(back, s);
        assert_eq!(read_plane_dims(&dir.path().join("scene_090.pfm")).unwrap(), (4, 6));
    }

    #[test]
    fn mismatched_channels_rejected() {
        let dir = tempfile::tempdir().unwrap();
        for (i, a) in PolAngle::ALL.iter().enumerate() {
            let w = if i == 3 { 8 } else { 6 };
            write_plane(&channel_path(dir.path(), "x", *a, "pgm"), &Plane::filled(4, w, 0.5f64)).unwrap();
        }
        assert!(matches!(
            read_stack_dir::<f64>(dir.path(), &ReadLimits::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn unknown_extension() {
        assert!(matches!(
            write_plane(Path::new("/tmp/x.tiff"), &Plane::filled(2, 2, 0.0f64)),
            Err(Error::UnsupportedFormat(_))
        ));
    }
}
