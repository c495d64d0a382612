//! Polarizer filter array handling: orientation labels, the 2x2 pattern,
//! mosaic synthesis from a full-resolution stack, and the fixed-kernel
//! bilinear demosaicer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{conv3x3_plane, FeatureMap, Plane};

/// Polarizer orientation of one filter-array cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolAngle {
    Deg0,
    Deg45,
    Deg90,
    Deg135,
}

impl PolAngle {
    /// Canonical channel order used by every stack and weight file.
    pub const ALL: [PolAngle; 4] = [PolAngle::Deg0, PolAngle::Deg45, PolAngle::Deg90, PolAngle::Deg135];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn degrees(self) -> u32 {
        match self {
            PolAngle::Deg0 => 0,
            PolAngle::Deg45 => 45,
            PolAngle::Deg90 => 90,
            PolAngle::Deg135 => 135,
        }
    }

    pub fn from_degrees(deg: u32) -> Option<Self> {
        match deg {
            0 => Some(PolAngle::Deg0),
            45 => Some(PolAngle::Deg45),
            90 => Some(PolAngle::Deg90),
            135 => Some(PolAngle::Deg135),
            _ => None,
        }
    }

    /// File-name suffix (`000`, `045`, `090`, `135`).
    pub fn suffix(self) -> &'static str {
        match self {
            PolAngle::Deg0 => "000",
            PolAngle::Deg45 => "045",
            PolAngle::Deg90 => "090",
            PolAngle::Deg135 => "135",
        }
    }
}

/// The 2x2 polarizer layout, indexed by `(row mod 2, col mod 2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PfaPattern {
    cells: [[PolAngle; 2]; 2],
}

impl PfaPattern {
    pub fn new(cells: [[PolAngle; 2]; 2]) -> Result<Self> {
        let mut seen = [false; 4];
        for a in cells.iter().flatten() {
            if seen[a.index()] {
                return Err(Error::Pattern {
                    input: format_cells(&cells),
                    reason: format!("orientation {} appears twice", a.degrees()),
                });
            }
            seen[a.index()] = true;
        }
        Ok(Self { cells })
    }

    /// Sony IMX250MZR layout: 90/45 on even rows, 135/0 on odd rows.
    pub const fn imx250() -> Self {
        Self {
            cells: [
                [PolAngle::Deg90, PolAngle::Deg45],
                [PolAngle::Deg135, PolAngle::Deg0],
            ],
        }
    }

    #[inline]
    pub fn angle_at(&self, y: usize, x: usize) -> PolAngle {
        self.cells[y & 1][x & 1]
    }

    pub fn cells(&self) -> [[PolAngle; 2]; 2] {
        self.cells
    }

    /// Cell `(row, col)` within the 2x2 period that carries `angle`.
    pub fn position_of(&self, angle: PolAngle) -> (usize, usize) {
        for r in 0..2 {
            for c in 0..2 {
                if self.cells[r][c] == angle {
                    return (r, c);
                }
            }
        }
        unreachable!("pattern invariant: every orientation present")
    }
}

impl Default for PfaPattern {
    fn default() -> Self {
        Self::imx250()
    }
}

fn format_cells(cells: &[[PolAngle; 2]; 2]) -> String {
    format!(
        "{},{};{},{}",
        cells[0][0].degrees(),
        cells[0][1].degrees(),
        cells[1][0].degrees(),
        cells[1][1].degrees()
    )
}

/// `"90,45;135,0"`: rows separated by `;`, columns by `,`.
impl fmt::Display for PfaPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_cells(&self.cells))
    }
}

impl FromStr for PfaPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: &str| Error::Pattern {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let rows: Vec<&str> = s.trim().split(';').collect();
        if rows.len() != 2 {
            return Err(bad("expected two rows separated by ';'"));
        }
        let mut cells = [[PolAngle::Deg0; 2]; 2];
        for (r, row) in rows.iter().enumerate() {
            let cols: Vec<&str> = row.split(',').collect();
            if cols.len() != 2 {
                return Err(bad("expected two columns separated by ','"));
            }
            for (c, col) in cols.iter().enumerate() {
                let deg: u32 = col
                    .trim()
                    .parse()
                    .map_err(|_| bad("orientation is not an integer"))?;
                cells[r][c] = PolAngle::from_degrees(deg)
                    .ok_or_else(|| bad("orientation must be one of 0, 45, 90, 135"))?;
            }
        }
        PfaPattern::new(cells).map_err(|_| bad("orientations must be distinct"))
    }
}

impl Serialize for PfaPattern {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PfaPattern {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Four co-registered intensity planes in `(0, 45, 90, 135)` order.
#[derive(Clone, Debug, PartialEq)]
pub struct PolStack<T> {
    channels: [Plane<T>; 4],
}

impl<T: Scalar> PolStack<T> {
    pub fn new(i0: Plane<T>, i45: Plane<T>, i90: Plane<T>, i135: Plane<T>) -> Result<Self> {
        let dims = i0.dims();
        for p in [&i45, &i90, &i135] {
            if p.dims() != dims {
                return Err(Error::dimension(format!(
                    "stack channels disagree: {:?} vs {:?}",
                    dims,
                    p.dims()
                )));
            }
        }
        Ok(Self {
            channels: [i0, i45, i90, i135],
        })
    }

    pub fn from_channels(channels: [Plane<T>; 4]) -> Result<Self> {
        let [a, b, c, d] = channels;
        Self::new(a, b, c, d)
    }

    /// Same constant in every channel.
    pub fn constant(height: usize, width: usize, value: T) -> Self {
        Self {
            channels: std::array::from_fn(|_| Plane::filled(height, width, value)),
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::constant(height, width, T::zero())
    }

    pub fn from_feature_map(fm: FeatureMap<T>) -> Result<Self> {
        if fm.channels() != 4 {
            return Err(Error::contract(format!(
                "a polarization stack needs 4 channels, got {}",
                fm.channels()
            )));
        }
        let mut it = fm.into_planes().into_iter();
        let channels = std::array::from_fn(|_| it.next().expect("four planes"));
        Ok(Self { channels })
    }

    pub fn to_feature_map(&self) -> FeatureMap<T> {
        FeatureMap::new(self.channels.to_vec()).expect("stack planes share dimensions")
    }

    #[inline]
    pub fn channel(&self, a: PolAngle) -> &Plane<T> {
        &self.channels[a.index()]
    }

    #[inline]
    pub fn channel_mut(&mut self, a: PolAngle) -> &mut Plane<T> {
        &mut self.channels[a.index()]
    }

    pub fn channels(&self) -> &[Plane<T>; 4] {
        &self.channels
    }

    pub fn channels_mut(&mut self) -> &mut [Plane<T>; 4] {
        &mut self.channels
    }

    pub fn into_channels(self) -> [Plane<T>; 4] {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.channels[0].height()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.channels[0].width()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }

    pub fn map(&self, f: impl Fn(T) -> T + Copy) -> Self {
        Self {
            channels: std::array::from_fn(|c| self.channels[c].map(f)),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T + Copy) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Self {
            channels: std::array::from_fn(|c| {
                self.channels[c]
                    .zip_map(&other.channels[c], f)
                    .expect("dimensions checked")
            }),
        })
    }

    pub fn check_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::contract(format!(
                "stack shape mismatch: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }

    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Self> {
        let mut out = Vec::with_capacity(4);
        for c in &self.channels {
            out.push(c.crop(y0, x0, height, width)?);
        }
        let mut it = out.into_iter();
        Ok(Self {
            channels: std::array::from_fn(|_| it.next().expect("four planes")),
        })
    }

    pub fn paste(&mut self, src: &Self, y0: usize, x0: usize) -> Result<()> {
        for (dst, s) in self.channels.iter_mut().zip(&src.channels) {
            dst.paste(s, y0, x0)?;
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> PolStack<U> {
        PolStack {
            channels: std::array::from_fn(|c| self.channels[c].cast()),
        }
    }

    /// Number of samples across all four channels.
    pub fn sample_count(&self) -> usize {
        4 * self.height() * self.width()
    }
}

/// A single-plane DoFP raw frame tagged with its filter layout.
#[derive(Clone, Debug, PartialEq)]
pub struct MosaicImage<T> {
    plane: Plane<T>,
    pattern: PfaPattern,
}

impl<T: Scalar> MosaicImage<T> {
    /// Rejects planes without whole 2x2 periods.
    pub fn new(plane: Plane<T>, pattern: PfaPattern) -> Result<Self> {
        check_even(plane.height(), plane.width())?;
        Ok(Self { plane, pattern })
    }

    #[inline]
    pub fn plane(&self) -> &Plane<T> {
        &self.plane
    }

    #[inline]
    pub fn pattern(&self) -> PfaPattern {
        self.pattern
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.plane.dims()
    }

    pub fn into_plane(self) -> Plane<T> {
        self.plane
    }

    /// Crop at even offsets; the pattern stays valid for the sub-image.
    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Self> {
        if y0 % 2 != 0 || x0 % 2 != 0 {
            return Err(Error::PhaseViolation(format!(
                "crop offset ({y0},{x0}) is not on a 2x2 period boundary"
            )));
        }
        Self::new(self.plane.crop(y0, x0, height, width)?, self.pattern)
    }

    pub fn cast<U: Scalar>(&self) -> MosaicImage<U> {
        MosaicImage {
            plane: self.plane.cast(),
            pattern: self.pattern,
        }
    }
}

pub(crate) fn check_even(height: usize, width: usize) -> Result<()> {
    if height % 2 != 0 || width % 2 != 0 {
        return Err(Error::dimension(format!(
            "mosaic dimensions must be even in both axes, got {height}x{width}"
        )));
    }
    Ok(())
}

/// Samples each pixel from the stack channel the filter array puts there.
pub fn mosaic<T: Scalar>(stack: &PolStack<T>, pattern: PfaPattern) -> Result<MosaicImage<T>> {
    let (h, w) = stack.dims();
    check_even(h, w)?;
    let plane = Plane::from_fn(h, w, |y, x| stack.channel(pattern.angle_at(y, x)).get(y, x));
    MosaicImage::new(plane, pattern)
}

/// Four quarter-density channels: each holds the mosaic samples of its own
/// orientation and zero elsewhere.
pub fn sparse_expand<T: Scalar>(mosaic: &MosaicImage<T>) -> FeatureMap<T> {
    let (h, w) = mosaic.dims();
    let pattern = mosaic.pattern();
    let planes = PolAngle::ALL
        .iter()
        .map(|&a| {
            Plane::from_fn(h, w, |y, x| {
                if pattern.angle_at(y, x) == a {
                    mosaic.plane().get(y, x)
                } else {
                    T::zero()
                }
            })
        })
        .collect();
    FeatureMap::new(planes).expect("equal planes")
}

/// The fixed interpolation filter applied to every sparse channel.
pub const BILINEAR_FILTER: [f64; 9] = [0.25, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 0.25];

pub fn bilinear_filter<T: Scalar>() -> [T; 9] {
    BILINEAR_FILTER.map(T::of)
}

/// Bilinear demosaicing as one fixed convolution per sparse channel.
pub fn bilinear_demosaic<T: Scalar>(mosaic: &MosaicImage<T>) -> PolStack<T> {
    let filter = bilinear_filter::<T>();
    let sparse = sparse_expand(mosaic);
    let planes: Vec<Plane<T>> = sparse
        .planes()
        .iter()
        .map(|p| conv3x3_plane(p, &filter))
        .collect();
    let mut it = planes.into_iter();
    PolStack::from_channels(std::array::from_fn(|_| it.next().expect("four planes")))
        .expect("equal planes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stack(rng: &mut ChaCha8Rng, h: usize, w: usize) -> PolStack<f64> {
        PolStack::from_channels(std::array::from_fn(|_| {
            Plane::from_fn(h, w, |_, _| rng.random_range(0.01..1.0))
        }))
        .unwrap()
    }

    #[test]
    fn pattern_parse_and_display_round_trip() {
        let p: PfaPattern = "90,45;135,0".parse().unwrap();
        assert_eq!(p, PfaPattern::imx250());
        assert_eq!(p.to_string(), "90,45;135,0");
        assert!("90,45;135".parse::<PfaPattern>().is_err());
        assert!("90,45;45,0".parse::<PfaPattern>().is_err());
        assert!("90,30;135,0".parse::<PfaPattern>().is_err());
        assert!("0,45,90;135".parse::<PfaPattern>().is_err());
    }

    #[test]
    fn constant_channels_produce_alternating_rows() {
        let stack = PolStack::new(
            Plane::filled(4, 4, 0.1),
            Plane::filled(4, 4, 0.2),
            Plane::filled(4, 4, 0.3),
            Plane::filled(4, 4, 0.4),
        )
        .unwrap();
        let m = mosaic(&stack, PfaPattern::imx250()).unwrap();
        assert_eq!(m.plane().row(0), &[0.3, 0.2, 0.3, 0.2]);
        assert_eq!(m.plane().row(1), &[0.4, 0.1, 0.4, 0.1]);
        assert_eq!(m.plane().row(2), &[0.3, 0.2, 0.3, 0.2]);
    }

    #[test]
    fn equal_channels_give_constant_mosaic() {
        let m = mosaic(&PolStack::constant(6, 8, 0.7), PfaPattern::imx250()).unwrap();
        assert!(m.plane().data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn every_mosaic_pixel_comes_from_one_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let stack = random_stack(&mut rng, 4, 4);
        let m = mosaic(&stack, PfaPattern::imx250()).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let v = m.plane().get(y, x);
                let sources: Vec<_> = PolAngle::ALL
                    .iter()
                    .filter(|&&a| stack.channel(a).get(y, x) == v)
                    .collect();
                assert_eq!(sources.len(), 1);
                assert_eq!(*sources[0], PfaPattern::imx250().angle_at(y, x));
            }
        }
    }

    #[test]
    fn odd_dimensions_rejected() {
        let stack = PolStack::<f64>::constant(5, 4, 0.5);
        assert!(matches!(
            mosaic(&stack, PfaPattern::imx250()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn sparse_expand_partitions_positions() {
        let ones = MosaicImage::new(Plane::filled(4, 6, 1.0), PfaPattern::imx250()).unwrap();
        let sparse = sparse_expand(&ones);
        for (c, a) in PolAngle::ALL.iter().enumerate() {
            let (r0, c0) = PfaPattern::imx250().position_of(*a);
            for y in 0..4 {
                for x in 0..6 {
                    let expect = if y % 2 == r0 && x % 2 == c0 { 1.0 } else { 0.0 };
                    assert_eq!(sparse.plane(c).get(y, x), expect);
                }
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = mosaic(&random_stack(&mut rng, 8, 10), PfaPattern::imx250()).unwrap();
        let sparse = sparse_expand(&m);
        for c in 0..4 {
            let nonzero = sparse.plane(c).data().iter().filter(|v| **v != 0.0).count();
            assert_eq!(nonzero, 8 * 10 / 4);
        }
        for i in 0..80 {
            let s: f64 = (0..4).map(|c| sparse.plane(c).data()[i]).sum();
            assert_eq!(s, m.plane().data()[i]);
        }
    }

    /// Per-phase neighbour averaging written out directly.
    fn phase_average_reference(m: &MosaicImage<f64>, a: PolAngle, y: usize, x: usize) -> f64 {
        let p = m.pattern();
        let at = |yy: isize, xx: isize| m.plane().get(yy as usize, xx as usize);
        let (y, x) = (y as isize, x as isize);
        if p.angle_at(y as usize, x as usize) == a {
            return at(y, x);
        }
        let (r, c) = p.position_of(a);
        let same_row = (y as usize) % 2 == r;
        let same_col = (x as usize) % 2 == c;
        match (same_row, same_col) {
            (true, false) => 0.5 * (at(y, x - 1) + at(y, x + 1)),
            (false, true) => 0.5 * (at(y - 1, x) + at(y + 1, x)),
            (false, false) => {
                0.25 * (at(y - 1, x - 1) + at(y - 1, x + 1) + at(y + 1, x - 1) + at(y + 1, x + 1))
            }
            (true, true) => unreachable!(),
        }
    }

    #[test]
    fn bilinear_matches_phase_averaging_in_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = MosaicImage::new(
            Plane::from_fn(8, 8, |_, _| rng.random_range(0.0..1.0)),
            PfaPattern::imx250(),
        )
        .unwrap();
        let out = bilinear_demosaic(&m);
        for a in PolAngle::ALL {
            for y in 1..7 {
                for x in 1..7 {
                    let expect = phase_average_reference(&m, a, y, x);
                    let got = out.channel(a).get(y, x);
                    assert!((got - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn bilinear_is_exact_on_constants_and_native_samples() {
        let c = 0.6180339887;
        let m = mosaic(&PolStack::constant(10, 12, c), PfaPattern::imx250()).unwrap();
        let out = bilinear_demosaic(&m);
        for a in PolAngle::ALL {
            for y in 1..9 {
                for x in 1..11 {
                    assert_eq!(out.channel(a).get(y, x), c);
                }
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = mosaic(&random_stack(&mut rng, 8, 8), PfaPattern::imx250()).unwrap();
        let out = bilinear_demosaic(&m);
        let back = mosaic(&out, m.pattern()).unwrap();
        assert_eq!(back, m);
    }
}
