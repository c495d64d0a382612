//! Inference throughput measurement.
//!
//! Latency is single-frame wall-clock time of the forward pass; the input
//! is prepared before the timed region starts.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pfa::{MosaicImage, PfaPattern};
use crate::ppdn::{count_macs, plan_tiles, tiled_forward, PpdnConfig, PpdnWeights, TileGrid};
use crate::scalar::Scalar;
use crate::tensor::Plane;

/// Default working-set budget for a benchmark run.
pub const DEFAULT_MEMORY_BUDGET: usize = 4 << 30;

/// Reference rates from the embedded-GPU deployment the network was
/// designed for. Reported for context only.
pub fn reference_fps(cfg: &PpdnConfig) -> Option<f64> {
    match cfg.preset_name() {
        Some("ppdn") => Some(380.0),
        Some("ppdn-l") => Some(34.0),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchOptions {
    pub tiles: TileGrid,
    pub halo: usize,
    pub warmup: usize,
    pub iters: usize,
    pub memory_budget: usize,
    pub deterministic: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            tiles: TileGrid::single(),
            halo: 8,
            warmup: 2,
            iters: 10,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            deterministic: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub preset: String,
    pub height: usize,
    pub width: usize,
    pub tiles: String,
    pub halo: usize,
    pub warmup: usize,
    pub iters: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub fps: f64,
    pub threads: usize,
    pub deterministic: bool,
    pub macs: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_fps: Option<f64>,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{} {}x{} tiles {} halo {}: mean {:.3} ms, median {:.3} ms, p95 {:.3} ms, {:.2} FPS ({} iters, {} threads)",
            self.preset,
            self.height,
            self.width,
            self.tiles,
            self.halo,
            self.mean_ms,
            self.median_ms,
            self.p95_ms,
            self.fps,
            self.iters,
            self.threads
        );
        if let Some(r) = self.reference_fps {
            s.push_str(&format!("; reference {r} FPS on embedded GPU"));
        }
        s
    }
}

/// Points the timing loop reports to an observer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchEvent {
    InputPrepared,
    WarmupDone,
    TimedStart,
    Iteration(usize),
    TimedEnd,
}

/// Seeded uniform noise in `[0, 1)`.
pub fn synthetic_input<T: Scalar>(height: usize, width: usize, pattern: PfaPattern, seed: u64) -> Result<MosaicImage<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MosaicImage::new(
        Plane::from_fn(height, width, |_, _| T::of(rng.random_range(0.0..1.0))),
        pattern,
    )
}

/// Rough peak working set of one forward pass over a `height x width` tile:
/// two live feature maps of `filters` channels plus a handful of 4-channel
/// stacks.
pub fn estimate_bytes<T>(cfg: &PpdnConfig, height: usize, width: usize) -> usize {
    height
        .saturating_mul(width)
        .saturating_mul(2 * cfg.filters + 24)
        .saturating_mul(std::mem::size_of::<T>())
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() as f64 * q).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

pub fn measure<T: Scalar>(
    weights: &PpdnWeights<T>,
    input: &MosaicImage<T>,
    opts: &BenchOptions,
    mut observe: impl FnMut(BenchEvent),
) -> Result<BenchReport> {
    if opts.iters < 10 {
        return Err(Error::Config(format!("at least 10 measured iterations, got {}", opts.iters)));
    }
    let cfg = *weights.config();
    let (h, w) = input.dims();
    let spans = plan_tiles(h, w, opts.tiles, opts.halo)?;
    let threads = rayon::current_num_threads();
    let per_tile = spans
        .iter()
        .map(|s| estimate_bytes::<T>(&cfg, s.outer_y.1 - s.outer_y.0, s.outer_x.1 - s.outer_x.0))
        .max()
        .unwrap_or(0);
    let required = per_tile.saturating_mul(spans.len().min(threads).max(1));
    if required > opts.memory_budget {
        let rows = ((required as f64 / opts.memory_budget as f64).sqrt().ceil() as usize).max(2);
        return Err(Error::InsufficientMemory {
            required,
            budget: opts.memory_budget,
            suggestion: format!("split the frame into tiles, e.g. --tile {rows}x{rows}"),
        });
    }
    observe(BenchEvent::InputPrepared);

    for _ in 0..opts.warmup {
        std::hint::black_box(tiled_forward(input, weights, opts.tiles, opts.halo)?);
    }
    observe(BenchEvent::WarmupDone);

    let mut times = Vec::with_capacity(opts.iters);
    observe(BenchEvent::TimedStart);
    for i in 0..opts.iters {
        let t0 = Instant::now();
        std::hint::black_box(tiled_forward(input, weights, opts.tiles, opts.halo)?);
        times.push(t0.elapsed().as_secs_f64() * 1e3);
        observe(BenchEvent::Iteration(i));
    }
    observe(BenchEvent::TimedEnd);

    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    Ok(BenchReport {
        preset: cfg.preset_name().map(str::to_string).unwrap_or_else(|| cfg.to_string()),
        height: h,
        width: w,
        tiles: opts.tiles.to_string(),
        halo: opts.halo,
        warmup: opts.warmup,
        iters: opts.iters,
        mean_ms: mean,
        median_ms: median,
        p95_ms: percentile(&sorted, 0.95),
        fps: 1000.0 / mean,
        threads,
        deterministic: opts.deterministic,
        macs: count_macs(&cfg, h, w),
        reference_fps: reference_fps(&cfg),
    })
}

/// Outcome of comparing reports for "more work, no less time".
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MonotonicityCheck {
    /// Inversions under the tolerance: timing noise.
    pub warnings: Vec<String>,
    /// Inversions at or above the tolerance.
    pub violations: Vec<String>,
}

/// Pairs where the run with more MACs was faster. Inversions smaller than
/// `tolerance` (relative) only warn.
pub fn check_monotone(reports: &[BenchReport], tolerance: f64) -> MonotonicityCheck {
    let mut out = MonotonicityCheck::default();
    for a in reports {
        for b in reports {
            if a.macs > b.macs && a.mean_ms < b.mean_ms {
                let gap = (b.mean_ms - a.mean_ms) / b.mean_ms;
                let msg = format!(
                    "{} {}x{} ({} MACs) ran in {:.3} ms, faster than {} {}x{} ({} MACs) at {:.3} ms",
                    a.preset, a.height, a.width, a.macs, a.mean_ms, b.preset, b.height, b.width, b.macs, b.mean_ms
                );
                if gap < tolerance {
                    log::warn!("{msg}");
                    out.warnings.push(msg);
                } else {
                    out.violations.push(msg);
                }
            }
        }
    }
    out
}
