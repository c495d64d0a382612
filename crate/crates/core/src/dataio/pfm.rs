//! Portable float map, single channel.
//!
//! Header `Pf\n<width> <height>\n<scale>\n`; a negative scale marks
//! little-endian samples. Rows are stored bottom to top.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Plane;

use super::{header_tokens, parse_dim, ReadLimits};

pub fn encode_pfm<T: Scalar>(plane: &Plane<T>) -> Vec<u8> {
    let (h, w) = plane.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(h * w * 4);
    for y in (0..h).rev() {
        for v in plane.row(y) {
            out.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm<T: Scalar>(bytes: &[u8], limits: &ReadLimits) -> Result<Plane<T>> {
    let (w, h, little, start) = pfm_header(bytes)?;
    limits.check(w, h)?;
    let need = w * h * 4;
    let payload = &bytes[start..];
    if payload.len() < need {
        return Err(Error::Truncated(format!(
            "PFM payload has {} bytes, {w}x{h} needs {need}",
            payload.len()
        )));
    }
    let mut data = vec![T::zero(); w * h];
    for (i, c) in payload[..need].chunks_exact(4).enumerate() {
        let raw: [u8; 4] = c.try_into().expect("4 bytes");
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (file_row, x) = (i / w, i % w);
        data[(h - 1 - file_row) * w + x] = T::of_f32(v);
    }
    Plane::new(h, w, data)
}

/// `(width, height, little_endian, payload offset)`.
pub(crate) fn pfm_header(bytes: &[u8]) -> Result<(usize, usize, bool, usize)> {
    match bytes.get(..2) {
        Some(b"Pf") => {}
        Some(b"PF") => {
            return Err(Error::UnsupportedFormat("three-channel PFM; convert to one channel first".into()));
        }
        _ => return Err(Error::UnsupportedFormat("not a PFM file".into())),
    }
    let (tokens, start) = header_tokens(bytes, 4)?;
    let w = parse_dim(&tokens[1], "width")?;
    let h = parse_dim(&tokens[2], "height")?;
    let scale: f64 = tokens[3]
        .parse()
        .map_err(|_| Error::Header(format!("PFM scale `{}` is not a number", tokens[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Header(format!("PFM scale {scale} must be nonzero")));
    }
    Ok((w, h, scale < 0.0, start))
}
