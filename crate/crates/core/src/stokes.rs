//! Linear Stokes parameters, degree and angle of linear polarization, and
//! the HSV rendering used to display angles.
//!
//! Angles are stored normalized: `aolp` lies in `[0, 1)` with `1.0`
//! standing for 180 degrees. The quadrant-aware `atan2(s2, s1)` is halved
//! and shifted into `[0, 180)`; a pixel with `s1 = s2 = 0` has angle 0.

use crate::pfa::{PolAngle, PolStack};
use crate::scalar::Scalar;
use crate::tensor::Plane;

/// Denominator guard for DoLP inside the training loss.
pub const TRAIN_EPS: f64 = 1e-8;
/// Denominator guard for DoLP in evaluation and rendering.
pub const EVAL_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct StokesMaps<T> {
    pub s0: Plane<T>,
    pub s1: Plane<T>,
    pub s2: Plane<T>,
    pub dolp: Plane<T>,
    /// Normalized angle in `[0, 1)`.
    pub aolp: Plane<T>,
}

/// Per-pixel Stokes quantities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StokesPixel<T> {
    pub s0: T,
    pub s1: T,
    pub s2: T,
    pub dolp: T,
    pub aolp: T,
}

#[inline]
pub fn stokes_pixel<T: Scalar>(i0: T, i45: T, i90: T, i135: T, eps: T) -> StokesPixel<T> {
    let s0 = T::of(0.5) * (i0 + i45 + i90 + i135);
    let s1 = i0 - i90;
    let s2 = i45 - i135;
    let dolp = (s1 * s1 + s2 * s2).sqrt() / (s0 + eps);
    StokesPixel {
        s0,
        s1,
        s2,
        dolp,
        aolp: normalized_angle(s1, s2),
    }
}

/// `wrap(0.5 * atan2(s2, s1)) / pi` in `[0, 1)`.
#[inline]
pub fn normalized_angle<T: Scalar>(s1: T, s2: T) -> T {
    if s1 == T::zero() && s2 == T::zero() {
        return T::zero();
    }
    let mut a = T::of(0.5) * s2.atan2(s1);
    if a < T::zero() {
        a += T::PI();
    }
    wrap_unit(a / T::PI())
}

/// Reduces any real to `[0, 1)`, guarding the rounding case that lands on 1.
#[inline]
pub fn wrap_unit<T: Scalar>(v: T) -> T {
    let mut r = v - v.floor();
    if r >= T::one() {
        r -= T::one();
    }
    if r < T::zero() {
        r = T::zero();
    }
    r
}

pub fn stokes_from_stack<T: Scalar>(stack: &PolStack<T>, eps: T) -> StokesMaps<T> {
    let (h, w) = stack.dims();
    let n = h * w;
    let [c0, c45, c90, c135] = [
        stack.channel(PolAngle::Deg0).data(),
        stack.channel(PolAngle::Deg45).data(),
        stack.channel(PolAngle::Deg90).data(),
        stack.channel(PolAngle::Deg135).data(),
    ];
    let mut s0 = Vec::with_capacity(n);
    let mut s1 = Vec::with_capacity(n);
    let mut s2 = Vec::with_capacity(n);
    let mut dolp = Vec::with_capacity(n);
    let mut aolp = Vec::with_capacity(n);
    for p in 0..n {
        let px = stokes_pixel(c0[p], c45[p], c90[p], c135[p], eps);
        s0.push(px.s0);
        s1.push(px.s1);
        s2.push(px.s2);
        dolp.push(px.dolp);
        aolp.push(px.aolp);
    }
    let plane = |d| Plane::new(h, w, d).expect("sized from stack");
    StokesMaps {
        s0: plane(s0),
        s1: plane(s1),
        s2: plane(s2),
        dolp: plane(dolp),
        aolp: plane(aolp),
    }
}

/// 8-bit interleaved raster, one or three channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image8 {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

/// Round half away from zero, clamp to the byte range.
#[inline]
pub fn quantize_u8(v: f64) -> u8 {
    let r = (v * 255.0).round();
    if r.is_nan() || r <= 0.0 {
        0
    } else if r >= 255.0 {
        255
    } else {
        r as u8
    }
}

/// Fully saturated, full-value HSV color for a hue in degrees.
pub fn hue_to_rgb(hue_deg: f64) -> [f64; 3] {
    let h = hue_deg.rem_euclid(360.0) / 60.0;
    let x = 1.0 - ((h % 2.0) - 1.0).abs();
    match h as u32 {
        0 => [1.0, x, 0.0],
        1 => [x, 1.0, 0.0],
        2 => [0.0, 1.0, x],
        3 => [0.0, x, 1.0],
        4 => [x, 0.0, 1.0],
        _ => [1.0, 0.0, x],
    }
}

/// Maps each normalized angle to hue `aolp * 360`.
///
/// Returns the image and how many samples had to be clamped into `[0, 1)`.
pub fn aolp_to_rgb<T: Scalar>(aolp: &Plane<T>) -> (Image8, usize) {
    let mut clamped = 0;
    let mut data = Vec::with_capacity(aolp.len() * 3);
    for &v in aolp.data() {
        let mut a = v.to_f64_lossy();
        if !(0.0..1.0).contains(&a) {
            clamped += 1;
            a = if a >= 1.0 { 1.0 - f64::EPSILON } else { 0.0 };
        }
        let rgb = hue_to_rgb(a * 360.0);
        data.extend(rgb.iter().map(|&c| quantize_u8(c)));
    }
    if clamped > 0 {
        log::warn!("{clamped} angle samples outside [0, 1) were clamped");
    }
    (
        Image8 {
            width: aolp.width(),
            height: aolp.height(),
            channels: 3,
            data,
        },
        clamped,
    )
}

/// Linear grayscale rendering of `[lo, hi]` onto `[0, 255]`.
pub fn plane_to_gray<T: Scalar>(plane: &Plane<T>, lo: f64, hi: f64) -> Image8 {
    let span = hi - lo;
    Image8 {
        width: plane.width(),
        height: plane.height(),
        channels: 1,
        data: plane
            .data()
            .iter()
            .map(|&v| quantize_u8((v.to_f64_lossy() - lo) / span))
            .collect(),
    }
}
