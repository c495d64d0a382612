//! Tiled inference for frames that do not fit in memory at once.
//!
//! The frame is cut into a `rows x cols` grid on even coordinates so every
//! tile keeps the filter-array phase. Each tile is grown by `halo` pixels on
//! its interior edges, run through the network, and centre-cropped back.
//! With a halo at least the network's receptive radius the stitched result
//! is bitwise identical to whole-frame inference; with `halo = 0` seams may
//! appear within the receptive radius of tile boundaries.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pfa::{check_even, MosaicImage, PolStack};
use crate::scalar::Scalar;

use super::forward::{forward, InferenceResult};
use super::weights::PpdnWeights;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TileGrid {
    pub rows: usize,
    pub cols: usize,
}

impl TileGrid {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config("tile grid needs at least one row and column".into()));
        }
        Ok(Self { rows, cols })
    }

    pub fn single() -> Self {
        Self { rows: 1, cols: 1 }
    }

    pub fn is_single(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }
}

impl fmt::Display for TileGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// `"RxC"`, e.g. `"2x2"`.
impl FromStr for TileGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (r, c) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::Config(format!("tile grid `{s}` is not of the form RxC")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("tile grid `{s}` is not of the form RxC")))
        };
        TileGrid::new(parse(r)?, parse(c)?)
    }
}

/// One tile: the core region it owns and the expanded region it computes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TileSpan {
    pub core_y: (usize, usize),
    pub core_x: (usize, usize),
    pub outer_y: (usize, usize),
    pub outer_x: (usize, usize),
}

/// Splits `[0, len)` into `parts` even-aligned intervals.
fn split_even(len: usize, parts: usize) -> Result<Vec<(usize, usize)>> {
    let periods = len / 2;
    if parts > periods {
        return Err(Error::Config(format!(
            "cannot split {len} pixels into {parts} tiles of whole 2x2 periods"
        )));
    }
    Ok((0..parts)
        .map(|p| (2 * (periods * p / parts), 2 * (periods * (p + 1) / parts)))
        .collect())
}

pub fn plan_tiles(height: usize, width: usize, grid: TileGrid, halo: usize) -> Result<Vec<TileSpan>> {
    check_even(height, width)?;
    if halo % 2 != 0 {
        return Err(Error::PhaseViolation(format!(
            "halo {halo} is odd; expanded tiles would start off the 2x2 period"
        )));
    }
    let ys = split_even(height, grid.rows)?;
    let xs = split_even(width, grid.cols)?;
    let mut spans = Vec::with_capacity(ys.len() * xs.len());
    for &(y0, y1) in &ys {
        for &(x0, x1) in &xs {
            spans.push(TileSpan {
                core_y: (y0, y1),
                core_x: (x0, x1),
                outer_y: (y0.saturating_sub(halo), (y1 + halo).min(height)),
                outer_x: (x0.saturating_sub(halo), (x1 + halo).min(width)),
            });
        }
    }
    for s in &spans {
        if s.outer_y.0 % 2 != 0 || s.outer_x.0 % 2 != 0 {
            return Err(Error::PhaseViolation(format!(
                "tile origin ({}, {}) is odd",
                s.outer_y.0, s.outer_x.0
            )));
        }
    }
    Ok(spans)
}

pub fn tiled_forward<T: Scalar>(
    mosaic: &MosaicImage<T>,
    weights: &PpdnWeights<T>,
    grid: TileGrid,
    halo: usize,
) -> Result<InferenceResult<T>> {
    let (h, w) = mosaic.dims();
    let spans = plan_tiles(h, w, grid, halo)?;
    let outputs: Vec<(TileSpan, InferenceResult<T>)> = spans
        .par_iter()
        .map(|span| {
            let tile = mosaic.crop(
                span.outer_y.0,
                span.outer_x.0,
                span.outer_y.1 - span.outer_y.0,
                span.outer_x.1 - span.outer_x.0,
            )?;
            Ok((*span, forward(&tile, weights)?))
        })
        .collect::<Result<_>>()?;

    let mut x_cr = PolStack::zeros(h, w);
    let mut x_rr = PolStack::zeros(h, w);
    for (span, out) in &outputs {
        let oy = span.core_y.0 - span.outer_y.0;
        let ox = span.core_x.0 - span.outer_x.0;
        let ch = span.core_y.1 - span.core_y.0;
        let cw = span.core_x.1 - span.core_x.0;
        x_cr.paste(&out.x_cr.crop(oy, ox, ch, cw)?, span.core_y.0, span.core_x.0)?;
        x_rr.paste(&out.x_rr.crop(oy, ox, ch, cw)?, span.core_y.0, span.core_x.0)?;
    }
    Ok(InferenceResult { x_cr, x_rr })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!("2x2".parse::<TileGrid>().unwrap(), TileGrid { rows: 2, cols: 2 });
        assert_eq!("1X3".parse::<TileGrid>().unwrap(), TileGrid { rows: 1, cols: 3 });
        assert!("2".parse::<TileGrid>().is_err());
        assert!("0x2".parse::<TileGrid>().is_err());
    }

    #[test]
    fn plan_covers_frame_on_even_boundaries() {
        let spans = plan_tiles(22, 18, TileGrid::new(3, 2).unwrap(), 4).unwrap();
        assert_eq!(spans.len(), 6);
        let mut covered = vec![0u8; 22 * 18];
        for s in &spans {
            assert_eq!(s.core_y.0 % 2, 0);
            assert_eq!(s.core_x.0 % 2, 0);
            assert_eq!(s.outer_y.0 % 2, 0);
            for y in s.core_y.0..s.core_y.1 {
                for x in s.core_x.0..s.core_x.1 {
                    covered[y * 18 + x] += 1;
                }
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
    }

    #[test]
    fn odd_halo_is_phase_violation() {
        assert!(matches!(
            plan_tiles(16, 16, TileGrid::new(2, 2).unwrap(), 3),
            Err(Error::PhaseViolation(_))
        ));
    }

    #[test]
    fn too_many_tiles_rejected() {
        assert!(plan_tiles(4, 4, TileGrid::new(3, 1).unwrap(), 0).is_err());
    }
}
