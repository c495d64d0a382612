use rand::Rng;

use super::config::PpdnConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::ConvKernel3x3;

/// Trainable parameters of one network, layers in storage order:
/// head, reconstruction blocks, reconstruction output, refining entry,
/// refining blocks, refining output.
#[derive(Clone, Debug, PartialEq)]
pub struct PpdnWeights<T> {
    config: PpdnConfig,
    layers: Vec<ConvKernel3x3<T>>,
}

impl<T: Scalar> PpdnWeights<T> {
    pub fn new(config: PpdnConfig, layers: Vec<ConvKernel3x3<T>>) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        if layers.len() != shapes.len() {
            return Err(Error::Config(format!(
                "{config} needs {} layers, got {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (idx, (layer, &(o, i))) in layers.iter().zip(&shapes).enumerate() {
            if layer.out_channels() != o || layer.in_channels() != i || layer.bias().is_none() {
                return Err(Error::Config(format!(
                    "layer {idx}: expected {o}<-{i} with bias, got {}<-{}{}",
                    layer.out_channels(),
                    layer.in_channels(),
                    if layer.bias().is_none() { " without bias" } else { "" }
                )));
            }
        }
        Ok(Self { config, layers })
    }

    pub fn zeros(config: PpdnConfig) -> Self {
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(o, i)| ConvKernel3x3::zeros(o, i, true))
            .collect();
        Self { config, layers }
    }

    /// Fan-in scaled uniform taps in `[-s, s]`, `s = sqrt(6 / (9 * in))`,
    /// zero biases.
    pub fn init_uniform<R: Rng + ?Sized>(config: PpdnConfig, rng: &mut R) -> Self {
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(o, i)| {
                let s = (6.0 / (9.0 * i as f64)).sqrt();
                let taps = (0..o * i * 9)
                    .map(|_| T::of(rng.random_range(-s..=s)))
                    .collect();
                ConvKernel3x3::new(o, i, taps, Some(vec![T::zero(); o])).expect("shapes from config")
            })
            .collect();
        Self { config, layers }
    }

    /// As [`init_uniform`](Self::init_uniform), then zeroes the two residual
    /// output layers so both stages start as the bilinear estimate. The
    /// same number of PRNG draws is consumed.
    pub fn init_zero_residual<R: Rng + ?Sized>(config: PpdnConfig, rng: &mut R) -> Self {
        let mut w = Self::init_uniform(config, rng);
        let recon_out = config.refine_start() - 1;
        let last = w.layers.len() - 1;
        for idx in [recon_out, last] {
            let (taps, bias) = w.layers[idx].parts_mut();
            taps.fill(T::zero());
            if let Some(b) = bias {
                b.fill(T::zero());
            }
        }
        w
    }

    #[inline]
    pub fn config(&self) -> &PpdnConfig {
        &self.config
    }

    #[inline]
    pub fn layers(&self) -> &[ConvKernel3x3<T>] {
        &self.layers
    }

    #[inline]
    pub fn layers_mut(&mut self) -> &mut [ConvKernel3x3<T>] {
        &mut self.layers
    }

    pub fn head(&self) -> &ConvKernel3x3<T> {
        &self.layers[0]
    }

    pub fn recon_blocks(&self) -> &[ConvKernel3x3<T>] {
        &self.layers[1..=self.config.recon_blocks]
    }

    pub fn recon_out(&self) -> &ConvKernel3x3<T> {
        &self.layers[self.config.recon_blocks + 1]
    }

    pub fn refine_in(&self) -> &ConvKernel3x3<T> {
        &self.layers[self.config.refine_start()]
    }

    pub fn refine_blocks(&self) -> &[ConvKernel3x3<T>] {
        let s = self.config.refine_start() + 1;
        &self.layers[s..s + self.config.refine_blocks]
    }

    pub fn refine_out(&self) -> &ConvKernel3x3<T> {
        &self.layers[self.layers.len() - 1]
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvKernel3x3::param_count).sum()
    }

    /// Every parameter buffer (taps, then bias, per layer).
    pub fn param_slices(&self) -> Vec<&[T]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &self.layers {
            out.push(l.taps());
            if let Some(b) = l.bias() {
                out.push(b);
            }
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &mut self.layers {
            // Split borrow: taps and bias are disjoint fields.
            let (taps, bias) = l.parts_mut();
            out.push(taps);
            if let Some(b) = bias {
                out.push(b);
            }
        }
        out
    }

    /// Flattened copy of all parameters in storage order.
    pub fn to_flat(&self) -> Vec<T> {
        self.param_slices().into_iter().flatten().copied().collect()
    }

    pub fn cast<U: Scalar>(&self) -> PpdnWeights<U> {
        PpdnWeights {
            config: self.config,
            layers: self.layers.iter().map(ConvKernel3x3::cast).collect(),
        }
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.config != other.config {
            return Err(Error::contract(format!(
                "parameter shape mismatch: {} vs {}",
                self.config, other.config
            )));
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        for s in self.param_slices_mut() {
            for v in s {
                *v *= factor;
            }
        }
    }

    /// `self += other`, elementwise.
    pub fn accumulate(&mut self, other: &Self) -> Result<()> {
        self.check_same_shape(other)?;
        for (dst, src) in self.param_slices_mut().into_iter().zip(other.param_slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += *s;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppdn::config::count_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn element_count_matches_accounting() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for cfg in [
            PpdnConfig::PPDN,
            PpdnConfig::PPDN_L,
            PpdnConfig::new(1, 0, 1).unwrap(),
            PpdnConfig::new(3, 2, 5).unwrap(),
        ] {
            let w = PpdnWeights::<f64>::init_uniform(cfg, &mut rng);
            assert_eq!(w.param_count() as u64, count_params(&cfg));
            assert_eq!(w.to_flat().len() as u64, count_params(&cfg));
        }
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = PpdnWeights::<f64>::init_uniform(PpdnConfig::PPDN, &mut rng);
        for l in w.layers() {
            let s = (6.0 / (9.0 * l.in_channels() as f64)).sqrt();
            assert!(l.taps().iter().all(|v| v.abs() <= s));
            assert!(l.bias().unwrap().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn zero_residual_init_zeroes_only_output_layers() {
        let cfg = PpdnConfig::new(2, 1, 3).unwrap();
        let a = PpdnWeights::<f64>::init_uniform(cfg, &mut ChaCha8Rng::seed_from_u64(2));
        let b = PpdnWeights::<f64>::init_zero_residual(cfg, &mut ChaCha8Rng::seed_from_u64(2));
        for (i, (x, y)) in a.layers().iter().zip(b.layers()).enumerate() {
            if i == 3 || i == 6 {
                assert!(y.taps().iter().all(|v| *v == 0.0));
            } else {
                assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn layer_accessors_follow_storage_order() {
        let w = PpdnWeights::<f64>::zeros(PpdnConfig::new(2, 3, 6).unwrap());
        assert_eq!(w.head().in_channels(), 1);
        assert_eq!(w.recon_blocks().len(), 2);
        assert_eq!(w.recon_out().out_channels(), 4);
        assert_eq!(w.refine_in().in_channels(), 4);
        assert_eq!(w.refine_blocks().len(), 3);
        assert_eq!(w.refine_out().out_channels(), 4);
    }

    #[test]
    fn wrong_layer_shapes_rejected() {
        let cfg = PpdnConfig::new(1, 0, 2).unwrap();
        let mut layers = PpdnWeights::<f64>::zeros(cfg).layers().to_vec();
        layers[1] = ConvKernel3x3::zeros(3, 2, true);
        assert!(PpdnWeights::new(cfg, layers).is_err());
    }
}
