//! Floating-point scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// f32 or f64.
///
/// Training and all reference checks run in `f64`; `f32` is used for
/// inference when weights are loaded from the on-disk format.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn of(v: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    fn to_f32_lossy(self) -> f32;

    fn of_f32(v: f32) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
    #[inline]
    fn to_f32_lossy(self) -> f32 {
        self
    }
    #[inline]
    fn of_f32(v: f32) -> Self {
        v
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }
    #[inline]
    fn to_f32_lossy(self) -> f32 {
        self as f32
    }
    #[inline]
    fn of_f32(v: f32) -> Self {
        v as f64
    }
}
