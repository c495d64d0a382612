//! The progressive polarization demosaicing network.
//!
//! A reconstruction stage predicts a residual on top of bilinear
//! interpolation from the raw mosaic; a refining stage predicts a second
//! residual from the coarse four-channel estimate.

mod config;
mod forward;
mod io;
mod tiling;
mod weights;

pub use config::{count_macs, count_params, macs_per_pixel, LayerRole, PpdnConfig};
pub use forward::{forward, forward_coarse, InferenceResult};
pub(crate) use forward::forward_trace;
pub use io::{decode_weights, encode_weights, load_weights, save_weights, FORMAT_VERSION, MAGIC};
pub use tiling::{plan_tiles, tiled_forward, TileGrid, TileSpan};
pub use weights::PpdnWeights;
