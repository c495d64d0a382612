use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network size: `recon_blocks` basic blocks after the head in the
/// reconstruction stage, `refine_blocks` k-to-k blocks after the 4-to-k
/// entry block of the refining stage, and `filters` channels per hidden
/// layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PpdnConfig {
    pub recon_blocks: usize,
    pub refine_blocks: usize,
    pub filters: usize,
}

/// Role of one convolution layer, in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerRole {
    Head,
    ReconBlock(usize),
    ReconOut,
    RefineIn,
    RefineBlock(usize),
    RefineOut,
}

impl PpdnConfig {
    /// The lightweight network: one block per stage, 32 filters.
    pub const PPDN: PpdnConfig = PpdnConfig {
        recon_blocks: 1,
        refine_blocks: 1,
        filters: 32,
    };

    /// The large network: 9 + 3 blocks, 64 filters.
    pub const PPDN_L: PpdnConfig = PpdnConfig {
        recon_blocks: 9,
        refine_blocks: 3,
        filters: 64,
    };

    pub fn new(recon_blocks: usize, refine_blocks: usize, filters: usize) -> Result<Self> {
        let cfg = Self {
            recon_blocks,
            refine_blocks,
            filters,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.recon_blocks == 0 {
            return Err(Error::Config("reconstruction stage needs at least one block".into()));
        }
        if self.filters == 0 {
            return Err(Error::Config("filter count must be positive".into()));
        }
        Ok(())
    }

    /// `ppdn` or `ppdn-l` (case-insensitive).
    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "ppdn" => Some(Self::PPDN),
            "ppdn-l" | "ppdn_l" | "ppdnl" => Some(Self::PPDN_L),
            _ => None,
        }
    }

    pub fn preset_name(&self) -> Option<&'static str> {
        if *self == Self::PPDN {
            Some("ppdn")
        } else if *self == Self::PPDN_L {
            Some("ppdn-l")
        } else {
            None
        }
    }

    pub fn layer_count(&self) -> usize {
        self.recon_blocks + self.refine_blocks + 4
    }

    pub fn roles(&self) -> Vec<LayerRole> {
        let mut roles = vec![LayerRole::Head];
        roles.extend((0..self.recon_blocks).map(LayerRole::ReconBlock));
        roles.push(LayerRole::ReconOut);
        roles.push(LayerRole::RefineIn);
        roles.extend((0..self.refine_blocks).map(LayerRole::RefineBlock));
        roles.push(LayerRole::RefineOut);
        roles
    }

    /// `(out_channels, in_channels)` per layer in storage order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let k = self.filters;
        self.roles()
            .into_iter()
            .map(|r| match r {
                LayerRole::Head => (k, 1),
                LayerRole::ReconBlock(_) | LayerRole::RefineBlock(_) => (k, k),
                LayerRole::ReconOut | LayerRole::RefineOut => (4, k),
                LayerRole::RefineIn => (k, 4),
            })
            .collect()
    }

    /// Radius of the input neighbourhood that influences one output pixel:
    /// one pixel per stacked 3x3 convolution.
    pub fn receptive_radius(&self) -> usize {
        self.layer_count()
    }

    /// Index of the first refining-stage layer.
    pub(crate) fn refine_start(&self) -> usize {
        self.recon_blocks + 2
    }
}

impl fmt::Display for PpdnConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "m={} n={} k={}",
            self.recon_blocks, self.refine_blocks, self.filters
        )
    }
}

/// Trainable taps plus biases. The fixed bilinear branch is not counted.
pub fn count_params(cfg: &PpdnConfig) -> u64 {
    cfg.layer_shapes()
        .iter()
        .map(|&(o, i)| (o * i * 9 + o) as u64)
        .sum()
}

/// Multiply-accumulates per pixel over all trainable convolutions.
pub fn macs_per_pixel(cfg: &PpdnConfig) -> u64 {
    cfg.layer_shapes()
        .iter()
        .map(|&(o, i)| (o * i * 9) as u64)
        .sum()
}

/// Multiply-accumulates for one `height x width` frame, bias adds excluded.
pub fn count_macs(cfg: &PpdnConfig, height: usize, width: usize) -> u64 {
    macs_per_pixel(cfg) * (height as u64) * (width as u64)
}
