//! Division-of-focal-plane polarization demosaicing.
//!
//! A polarization camera places a 2x2 array of linear polarizers (0, 45, 90
//! and 135 degrees) over its pixels, so each raw frame holds one
//! orientation per pixel. This crate rebuilds the four full-resolution
//! channels from such a mosaic, either with a fixed bilinear filter or with
//! a two-stage residual network, and derives Stokes parameters, degree and
//! angle of linear polarization from the result.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`). Training
//! and reference checks use `f64`; the weight file stores `f32`, and
//! inference can run in either. Concrete aliases such as [`PolStack64`]
//! are provided for convenience.
//!
//! ```
//! use polarmosaic::{bilinear_demosaic, mosaic, stokes_from_stack, synth, PfaPattern, EVAL_EPS};
//!
//! let truth = synth::uniform_polarized_stack::<f64>(8, 8, 30.0, 0.5, 0.8);
//! let raw = mosaic(&truth, PfaPattern::imx250()).unwrap();
//! let stack = bilinear_demosaic(&raw);
//! let maps = stokes_from_stack(&stack, EVAL_EPS);
//! assert!((maps.aolp.get(4, 4) - 30.0 / 180.0).abs() < 1e-9);
//! ```

pub mod bench;
pub mod dataio;
pub mod error;
pub mod metrics;
pub mod pfa;
pub mod ppdn;
pub mod scalar;
pub mod stokes;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use metrics::{evaluate, psnr, psnr_aolp, EvalReport, Psnr};
pub use pfa::{bilinear_demosaic, mosaic, MosaicImage, PfaPattern, PolAngle, PolStack};
pub use ppdn::{
    count_macs, count_params, forward, load_weights, save_weights, tiled_forward, InferenceResult, PpdnConfig,
    PpdnWeights, TileGrid,
};
pub use scalar::Scalar;
pub use stokes::{stokes_from_stack, StokesMaps, EVAL_EPS, TRAIN_EPS};
pub use tensor::{conv3x3, ConvKernel3x3, FeatureMap, Plane};

pub type Plane32 = Plane<f32>;
pub type Plane64 = Plane<f64>;
pub type FeatureMap32 = FeatureMap<f32>;
pub type FeatureMap64 = FeatureMap<f64>;
pub type PolStack32 = PolStack<f32>;
pub type PolStack64 = PolStack<f64>;
pub type MosaicImage32 = MosaicImage<f32>;
pub type MosaicImage64 = MosaicImage<f64>;
pub type StokesMaps32 = StokesMaps<f32>;
pub type StokesMaps64 = StokesMaps<f64>;
pub type PpdnWeights32 = PpdnWeights<f32>;
pub type PpdnWeights64 = PpdnWeights<f64>;
pub type InferenceResult32 = InferenceResult<f32>;
pub type InferenceResult64 = InferenceResult<f64>;
