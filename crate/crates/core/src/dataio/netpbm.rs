//! Binary graymap (`P5`).
//!
//! Samples are normalized by the file's maxval, so a 16-bit file with
//! maxval 65535 maps 65535 to exactly 1.0. Two-byte samples are big-endian
//! as the Netpbm format defines them.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Plane;

use super::{header_tokens, parse_dim, ReadLimits};

pub const PGM_MAXVAL: u16 = 65535;

/// 16-bit encoding of values in `[0, 1]`, rounded half away from zero and
/// clamped.
pub fn encode_pgm<T: Scalar>(plane: &Plane<T>) -> Vec<u8> {
    let (h, w) = plane.dims();
    let mut out = format!("P5\n{w} {h}\n{PGM_MAXVAL}\n").into_bytes();
    out.reserve(h * w * 2);
    for v in plane.data() {
        let q = (v.to_f64_lossy() * PGM_MAXVAL as f64).round();
        let q = if q.is_nan() { 0.0 } else { q.clamp(0.0, PGM_MAXVAL as f64) } as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

pub fn decode_pgm<T: Scalar>(bytes: &[u8], limits: &ReadLimits) -> Result<Plane<T>> {
    let (w, h, maxval, start) = pgm_header(bytes)?;
    limits.check(w, h)?;
    let width = if maxval > 255 { 2 } else { 1 };
    let need = w * h * width;
    let payload = &bytes[start..];
    if payload.len() < need {
        return Err(Error::Truncated(format!(
            "PGM payload has {} bytes, {w}x{h} needs {need}",
            payload.len()
        )));
    }
    let scale = 1.0 / maxval as f64;
    let data = if width == 2 {
        payload[..need]
            .chunks_exact(2)
            .map(|c| T::of(u16::from_be_bytes([c[0], c[1]]) as f64 * scale))
            .collect()
    } else {
        payload[..need].iter().map(|&b| T::of(b as f64 * scale)).collect()
    };
    Plane::new(h, w, data)
}

pub(crate) fn pgm_header(bytes: &[u8]) -> Result<(usize, usize, u32, usize)> {
    if bytes.get(..2) != Some(b"P5") {
        return Err(Error::UnsupportedFormat("not a binary PGM (P5) file".into()));
    }
    let (tokens, start) = header_tokens(bytes, 4)?;
    let w = parse_dim(&tokens[1], "width")?;
    let h = parse_dim(&tokens[2], "height")?;
    let maxval = parse_dim(&tokens[3], "maxval")?;
    if maxval > 65535 {
        return Err(Error::Header(format!("maxval {maxval} exceeds 65535")));
    }
    Ok((w, h, maxval as u32, start))
}
