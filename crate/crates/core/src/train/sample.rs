//! Patch sampling and geometric augmentation.
//!
//! Flipping or rotating a polarization stack changes the direction of
//! polarization as well as pixel positions. A horizontal or vertical flip
//! maps an angle `theta` to `-theta`, which exchanges the 45 and 135
//! channels. A quarter turn maps `theta` to `theta + 90`, which exchanges
//! 0 with 90 and 45 with 135. A half turn leaves every angle unchanged.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pfa::{mosaic, MosaicImage, PfaPattern, PolStack};
use crate::scalar::Scalar;
use crate::tensor::Plane;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Transform {
    Identity,
    FlipHorizontal,
    FlipVertical,
    Rot90,
    Rot180,
    Rot270,
}

impl Transform {
    pub const ALL: [Transform; 6] = [
        Transform::Identity,
        Transform::FlipHorizontal,
        Transform::FlipVertical,
        Transform::Rot90,
        Transform::Rot180,
        Transform::Rot270,
    ];

    /// Source channel index for each output channel under the physical
    /// relabelling.
    pub fn channel_source(self) -> [usize; 4] {
        match self {
            Transform::Identity | Transform::Rot180 => [0, 1, 2, 3],
            Transform::FlipHorizontal | Transform::FlipVertical => [0, 3, 2, 1],
            Transform::Rot90 | Transform::Rot270 => [2, 3, 0, 1],
        }
    }

    /// Rotations are counter-clockwise.
    pub fn apply_plane<T: Scalar>(self, p: &Plane<T>) -> Plane<T> {
        let (h, w) = p.dims();
        match self {
            Transform::Identity => p.clone(),
            Transform::FlipHorizontal => Plane::from_fn(h, w, |y, x| p.get(y, w - 1 - x)),
            Transform::FlipVertical => Plane::from_fn(h, w, |y, x| p.get(h - 1 - y, x)),
            Transform::Rot180 => Plane::from_fn(h, w, |y, x| p.get(h - 1 - y, w - 1 - x)),
            Transform::Rot90 => Plane::from_fn(w, h, |y, x| p.get(x, w - 1 - y)),
            Transform::Rot270 => Plane::from_fn(w, h, |y, x| p.get(h - 1 - x, y)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentMode {
    /// Geometric transform with the channel relabelling it implies.
    #[default]
    Physical,
    /// Geometric transform only; polarization labels left as they were.
    /// Kept for comparison: this corrupts the angle supervision.
    Naive,
    /// No augmentation.
    Off,
}

impl std::str::FromStr for AugmentMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "physical" => Ok(Self::Physical),
            "naive" => Ok(Self::Naive),
            "off" => Ok(Self::Off),
            _ => Err(Error::Config(format!(
                "unknown augmentation `{s}` (expected physical, naive or off)"
            ))),
        }
    }
}

pub fn augment<T: Scalar>(stack: &PolStack<T>, transform: Transform, mode: AugmentMode) -> PolStack<T> {
    let moved: [Plane<T>; 4] = std::array::from_fn(|c| transform.apply_plane(&stack.channels()[c]));
    let src = match mode {
        AugmentMode::Physical => transform.channel_source(),
        AugmentMode::Naive | AugmentMode::Off => [0, 1, 2, 3],
    };
    PolStack::from_channels(std::array::from_fn(|c| moved[src[c]].clone())).expect("same dims")
}

/// A random training pair: an even-aligned `size x size` crop of `stack`,
/// optionally augmented, and the mosaic synthesized from it.
pub fn sample_patch<T: Scalar, R: Rng + ?Sized>(
    stack: &PolStack<T>,
    size: usize,
    pattern: PfaPattern,
    mode: AugmentMode,
    rng: &mut R,
) -> Result<(MosaicImage<T>, PolStack<T>)> {
    let (h, w) = stack.dims();
    if size == 0 || size % 2 != 0 {
        return Err(Error::PhaseViolation(format!("patch size {size} must be even and positive")));
    }
    if size > h || size > w {
        return Err(Error::Config(format!("patch {size} does not fit a {h}x{w} scene")));
    }
    let y0 = 2 * rng.random_range(0..=(h - size) / 2);
    let x0 = 2 * rng.random_range(0..=(w - size) / 2);
    let crop = stack.crop(y0, x0, size, size)?;
    let truth = match mode {
        AugmentMode::Off => crop,
        _ => {
            let t = Transform::ALL[rng.random_range(0..Transform::ALL.len())];
            augment(&crop, t, mode)
        }
    };
    Ok((mosaic(&truth, pattern)?, truth))
}
