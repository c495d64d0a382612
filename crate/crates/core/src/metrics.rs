//! PSNR for intensity channels and Stokes maps, circular PSNR for angles.
//!
//! Peaks: 1 for intensities, DoLP and normalized AoLP; 2 for S0, whose
//! range is twice the intensity range.

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::pfa::{PolAngle, PolStack};
use crate::scalar::Scalar;
use crate::stokes::{stokes_from_stack, EVAL_EPS};
use crate::tensor::Plane;

pub const DEFAULT_BORDER: usize = 2;
pub const S0_PEAK: f64 = 2.0;

/// A PSNR value, or the flag for a zero-error comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Psnr {
    Db(f64),
    Identical,
}

impl Psnr {
    /// `+inf` for identical inputs.
    pub fn value(self) -> f64 {
        match self {
            Psnr::Db(v) => v,
            Psnr::Identical => f64::INFINITY,
        }
    }

    pub fn is_identical(self) -> bool {
        matches!(self, Psnr::Identical)
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Db(v) => write!(f, "{v:.2}"),
            Psnr::Identical => f.write_str("identical"),
        }
    }
}

/// A JSON number in dB, or the string `"identical"`.
impl Serialize for Psnr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Psnr::Db(v) => s.serialize_f64(*v),
            Psnr::Identical => s.serialize_str("identical"),
        }
    }
}

impl<'de> Deserialize<'de> for Psnr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Psnr;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or \"identical\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Psnr, E> {
                Ok(Psnr::Db(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Psnr, E> {
                Ok(Psnr::Db(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Psnr, E> {
                Ok(Psnr::Db(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Psnr, E> {
                if v == "identical" {
                    Ok(Psnr::Identical)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> Psnr {
    if mse == 0.0 {
        Psnr::Identical
    } else {
        Psnr::Db(10.0 * (peak * peak / mse).log10())
    }
}

/// Mean of `err(ref, est)^2` over the interior left after removing
/// `border` pixels on every side.
fn interior_mse<T: Scalar>(
    reference: &Plane<T>,
    estimate: &Plane<T>,
    border: usize,
    err: impl Fn(T, T) -> T,
) -> Result<(f64, usize)> {
    reference.check_same_dims(estimate)?;
    let (h, w) = reference.dims();
    if 2 * border >= h || 2 * border >= w {
        return Err(Error::Dimension(format!("border {border} leaves no pixels in a {h}x{w} image")));
    }
    let mut sum = 0.0f64;
    for y in border..h - border {
        let (r, e) = (reference.row(y), estimate.row(y));
        for x in border..w - border {
            let d = err(r[x], e[x]).to_f64_lossy();
            sum += d * d;
        }
    }
    let n = (h - 2 * border) * (w - 2 * border);
    Ok((sum / n as f64, n))
}

pub fn psnr<T: Scalar>(reference: &Plane<T>, estimate: &Plane<T>, peak: f64, border: usize) -> Result<Psnr> {
    if !(peak > 0.0) {
        return Err(Error::Config(format!("PSNR peak must be positive, got {peak}")));
    }
    let (mse, _) = interior_mse(reference, estimate, border, |a, b| a - b)?;
    Ok(psnr_from_mse(mse, peak))
}

/// PSNR of normalized angle maps using the distance on the unit circle.
pub fn psnr_aolp<T: Scalar>(reference: &Plane<T>, estimate: &Plane<T>, border: usize) -> Result<Psnr> {
    let (mse, _) = interior_mse(reference, estimate, border, |a, b| {
        let d = (a - b).abs();
        d.min(T::one() - d)
    })?;
    Ok(psnr_from_mse(mse, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub i0: Psnr,
    pub i45: Psnr,
    pub i90: Psnr,
    pub i135: Psnr,
    pub s0: Psnr,
    pub dolp: Psnr,
    pub aolp: Psnr,
    pub border: usize,
    pub pixels: usize,
}

impl EvalReport {
    pub fn rows(&self) -> [(&'static str, Psnr); 7] {
        [
            ("I0", self.i0),
            ("I45", self.i45),
            ("I90", self.i90),
            ("I135", self.i135),
            ("S0", self.s0),
            ("DoLP", self.dolp),
            ("AoLP", self.aolp),
        ]
    }

    /// Aligned two-column table, one quantity per row.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<6}{:>12}\n", "", "PSNR (dB)");
        for (name, v) in self.rows() {
            out.push_str(&format!("{name:<6}{:>12}\n", v.to_string()));
        }
        out.push_str(&format!("border {} px, {} px evaluated\n", self.border, self.pixels));
        out
    }
}

pub fn evaluate<T: Scalar>(truth: &PolStack<T>, recon: &PolStack<T>, border: usize) -> Result<EvalReport> {
    truth.check_same_dims(recon)?;
    let eps = T::of(EVAL_EPS);
    let t = stokes_from_stack(truth, eps);
    let r = stokes_from_stack(recon, eps);
    let ch = |a: PolAngle| psnr(truth.channel(a), recon.channel(a), 1.0, border);
    let (_, pixels) = interior_mse(&t.s0, &r.s0, border, |a, b| a - b)?;
    Ok(EvalReport {
        i0: ch(PolAngle::Deg0)?,
        i45: ch(PolAngle::Deg45)?,
        i90: ch(PolAngle::Deg90)?,
        i135: ch(PolAngle::Deg135)?,
        s0: psnr(&t.s0, &r.s0, S0_PEAK, border)?,
        dolp: psnr(&t.dolp, &r.dolp, 1.0, border)?,
        aolp: psnr_aolp(&t.aolp, &r.aolp, border)?,
        border,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pfa::{bilinear_demosaic, mosaic, PfaPattern};
    use crate::stokes::wrap_unit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Plane<f64> {
        Plane::from_fn(h, w, |_, _| rng.random_range(0.0..1.0))
    }

    #[test]
    fn closed_forms() {
        let r = Plane::filled(6, 6, 0.5);
        assert_eq!(psnr(&r, &r, 1.0, 0).unwrap(), Psnr::Identical);
        let e = Plane::filled(6, 6, 0.6);
        let v = psnr(&r, &e, 1.0, 0).unwrap().value();
        assert!((v - 20.0).abs() < 1e-9);
        let a = Plane::filled(6, 6, 0.95);
        let b = Plane::filled(6, 6, 0.05);
        assert!((psnr_aolp(&a, &b, 2).unwrap().value() - 20.0).abs() < 1e-9);
        assert_eq!(psnr_aolp(&a, &a, 0).unwrap(), Psnr::Identical);
    }

    #[test]
    fn matches_direct_mse_and_border() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = random_plane(&mut rng, 9, 7);
        let b = random_plane(&mut rng, 9, 7);
        let mut sum = 0.0;
        for y in 2..7 {
            for x in 2..5 {
                sum += (a.get(y, x) - b.get(y, x)).powi(2);
            }
        }
        let want = 10.0 * (1.0 / (sum / 15.0)).log10();
        assert!((psnr(&a, &b, 1.0, 2).unwrap().value() - want).abs() < 1e-10);
        assert!(psnr(&a, &b, 1.0, 4).is_err());
        assert!(psnr(&a, &Plane::zeros(9, 8), 1.0, 0).is_err());
        assert!(psnr(&a, &b, 0.0, 0).is_err());
    }

    #[test]
    fn circular_dominates_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let a = random_plane(&mut rng, 8, 8);
            let b = random_plane(&mut rng, 8, 8);
            assert!(psnr_aolp(&a, &b, 0).unwrap().value() >= psnr(&a, &b, 1.0, 0).unwrap().value());
        }
    }

    #[test]
    fn serde_identical_flag() {
        assert_eq!(serde_json::to_string(&Psnr::Identical).unwrap(), "\"identical\"");
        assert_eq!(serde_json::to_string(&Psnr::Db(20.5)).unwrap(), "20.5");
        let back: Psnr = serde_json::from_str("\"identical\"").unwrap();
        assert_eq!(back, Psnr::Identical);
        let back: Psnr = serde_json::from_str("31").unwrap();
        assert_eq!(back, Psnr::Db(31.0));
    }

    #[test]
    fn evaluate_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = crate::synth::textured_scene::<f64, _>(16, 16, &mut rng);
        let rep = evaluate(&t, &t, DEFAULT_BORDER).unwrap();
        assert!(rep.rows().iter().all(|(_, v)| v.is_identical()));
        assert_eq!(rep.pixels, 144);

        let c = PolStack::constant(12, 12, 0.3);
        let b = bilinear_demosaic(&mosaic(&c, PfaPattern::imx250()).unwrap());
        let rep = evaluate(&c, &b, DEFAULT_BORDER).unwrap();
        assert!(rep.i0.is_identical() && rep.i45.is_identical() && rep.s0.is_identical());
        assert!(rep.to_table().contains("AoLP"));
    }

    #[test]
    fn aolp_rotation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_plane(&mut rng, 8, 8);
        let b = random_plane(&mut rng, 8, 8);
        let base = psnr_aolp(&a, &b, 0).unwrap().value();
        for c in [0.1, 0.37, 0.5, 0.93] {
            let ra = a.map(|v| wrap_unit(v + c));
            let rb = b.map(|v| wrap_unit(v + c));
            assert!((psnr_aolp(&ra, &rb, 0).unwrap().value() - base).abs() < 1e-9);
        }
    }
}
