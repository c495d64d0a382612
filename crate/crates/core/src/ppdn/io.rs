//! Binary weight file.
//!
//! Little-endian throughout:
//!
//! ```text
//! "PPDN" | version u32 = 1 | m u32 | n u32 | k u32
//! | pattern length u32 | pattern UTF-8 ("90,45;135,0")
//! | layer count u32
//! | per layer: out u32 | in u32 | taps f32[out*in*9] (out, in, ky, kx)
//! |            bias flag u8 | bias f32[out] when the flag is 1
//! ```

use std::path::Path;

use crate::dataio::write_atomic;
use crate::error::{Error, Result};
use crate::pfa::PfaPattern;
use crate::scalar::Scalar;
use crate::tensor::ConvKernel3x3;

use super::config::PpdnConfig;
use super::weights::PpdnWeights;

pub const MAGIC: &[u8; 4] = b"PPDN";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode_weights<T: Scalar>(weights: &PpdnWeights<T>, pattern: PfaPattern) -> Vec<u8> {
    let cfg = weights.config();
    let pattern = pattern.to_string();
    let mut out = Vec::with_capacity(32 + pattern.len() + weights.param_count() * 4);
    out.extend_from_slice(MAGIC);
    for v in [
        FORMAT_VERSION,
        cfg.recon_blocks as u32,
        cfg.refine_blocks as u32,
        cfg.filters as u32,
        pattern.len() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(pattern.as_bytes());
    out.extend_from_slice(&(weights.layers().len() as u32).to_le_bytes());
    for layer in weights.layers() {
        out.extend_from_slice(&(layer.out_channels() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.in_channels() as u32).to_le_bytes());
        for t in layer.taps() {
            out.extend_from_slice(&t.to_f32_lossy().to_le_bytes());
        }
        match layer.bias() {
            Some(b) => {
                out.push(1);
                for v in b {
                    out.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
                }
            }
            None => out.push(0),
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated(format!(
                "{what}: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.buf.len()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f32s<T: Scalar>(&mut self, count: usize, what: &str) -> Result<Vec<T>> {
        let bytes = self.take(count.checked_mul(4).ok_or_else(|| Error::Inconsistent(format!("{what}: size overflow")))?, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| T::of_f32(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect())
    }
}

pub fn decode_weights<T: Scalar>(bytes: &[u8]) -> Result<(PpdnWeights<T>, PfaPattern)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(MAGIC).into_owned(),
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let m = r.u32("m")? as usize;
    let n = r.u32("n")? as usize;
    let k = r.u32("k")? as usize;
    let cfg = PpdnConfig::new(m, n, k).map_err(|e| Error::Inconsistent(e.to_string()))?;
    let plen = r.u32("pattern length")? as usize;
    let pattern_bytes = r.take(plen, "pattern")?;
    let pattern: PfaPattern = std::str::from_utf8(pattern_bytes)
        .map_err(|_| Error::Inconsistent("pattern is not UTF-8".into()))?
        .parse()
        .map_err(|e: Error| Error::Inconsistent(e.to_string()))?;

    let count = r.u32("layer count")? as usize;
    let shapes = cfg.layer_shapes();
    if count != shapes.len() {
        return Err(Error::Inconsistent(format!(
            "declared {cfg} implies {} layers, file has {count}",
            shapes.len()
        )));
    }
    let mut layers = Vec::with_capacity(count);
    for (idx, &(eo, ei)) in shapes.iter().enumerate() {
        let o = r.u32("layer out channels")? as usize;
        let i = r.u32("layer in channels")? as usize;
        if (o, i) != (eo, ei) {
            return Err(Error::Inconsistent(format!(
                "layer {idx} is {o}<-{i}, declared {cfg} requires {eo}<-{ei}"
            )));
        }
        let taps = r.f32s(o * i * 9, "layer taps")?;
        let flag = r.take(1, "bias flag")?[0];
        let bias = match flag {
            1 => Some(r.f32s(o, "layer bias")?),
            0 => {
                return Err(Error::Inconsistent(format!("layer {idx} has no bias")));
            }
            other => {
                return Err(Error::Inconsistent(format!("layer {idx}: bias flag {other}")));
            }
        };
        layers.push(ConvKernel3x3::new(o, i, taps, bias).expect("shape checked"));
    }
    if r.pos != bytes.len() {
        return Err(Error::Inconsistent(format!(
            "{} trailing bytes after the last layer",
            bytes.len() - r.pos
        )));
    }
    let weights = PpdnWeights::new(cfg, layers).map_err(|e| Error::Inconsistent(e.to_string()))?;
    Ok((weights, pattern))
}

/// Writes via a temporary file and rename.
pub fn save_weights<T: Scalar>(path: impl AsRef<Path>, weights: &PpdnWeights<T>, pattern: PfaPattern) -> Result<()> {
    write_atomic(path.as_ref(), &encode_weights(weights, pattern))
}

pub fn load_weights<T: Scalar>(path: impl AsRef<Path>) -> Result<(PpdnWeights<T>, PfaPattern)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes)
}
