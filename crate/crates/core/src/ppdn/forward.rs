use crate::error::{Error, Result};
use crate::pfa::{bilinear_demosaic, check_even, MosaicImage, PolStack};
use crate::scalar::Scalar;
use crate::tensor::{conv3x3, relu_in_place, FeatureMap};

use super::weights::PpdnWeights;

/// Coarse (`x_cr`) and refined (`x_rr`) reconstructions.
#[derive(Clone, Debug, PartialEq)]
pub struct InferenceResult<T> {
    pub x_cr: PolStack<T>,
    pub x_rr: PolStack<T>,
}

/// Activations kept for the reverse pass. ReLU outputs double as their own
/// derivative masks (`a > 0` exactly where the pre-activation was positive).
pub(crate) struct ForwardTrace<T> {
    pub input: FeatureMap<T>,
    /// Head output followed by each reconstruction block output.
    pub recon_acts: Vec<FeatureMap<T>>,
    pub x_cr: PolStack<T>,
    /// Refining entry output followed by each refining block output.
    pub refine_acts: Vec<FeatureMap<T>>,
    pub x_rr: Option<PolStack<T>>,
}

/// Full two-stage inference.
///
/// The reconstruction stage adds a learned residual to the bilinear
/// estimate; the refining stage adds a second residual computed from the
/// coarse stack. Residual output convolutions carry no activation.
pub fn forward<T: Scalar>(mosaic: &MosaicImage<T>, weights: &PpdnWeights<T>) -> Result<InferenceResult<T>> {
    let trace = run(mosaic, weights, true, false)?;
    Ok(InferenceResult {
        x_rr: trace.x_rr.expect("refine stage requested"),
        x_cr: trace.x_cr,
    })
}

/// Reconstruction stage only.
pub fn forward_coarse<T: Scalar>(mosaic: &MosaicImage<T>, weights: &PpdnWeights<T>) -> Result<PolStack<T>> {
    Ok(run(mosaic, weights, false, false)?.x_cr)
}

pub(crate) fn forward_trace<T: Scalar>(
    mosaic: &MosaicImage<T>,
    weights: &PpdnWeights<T>,
    refine: bool,
) -> Result<ForwardTrace<T>> {
    run(mosaic, weights, refine, true)
}

fn run<T: Scalar>(
    mosaic: &MosaicImage<T>,
    weights: &PpdnWeights<T>,
    refine: bool,
    keep: bool,
) -> Result<ForwardTrace<T>> {
    let (h, w) = mosaic.dims();
    check_even(h, w)?;
    weights.config().validate()?;
    let shape_err = |e: Error| Error::Config(format!("weights do not fit the network: {e}"));

    let input = FeatureMap::single(mosaic.plane().clone());
    let mut recon_acts = Vec::new();

    let mut act = conv3x3(&input, weights.head()).map_err(shape_err)?;
    relu_in_place(&mut act);
    for block in weights.recon_blocks() {
        let mut next = conv3x3(&act, block).map_err(shape_err)?;
        relu_in_place(&mut next);
        if keep {
            recon_acts.push(std::mem::replace(&mut act, next));
        } else {
            act = next;
        }
    }
    let residual = conv3x3(&act, weights.recon_out()).map_err(shape_err)?;
    if keep {
        recon_acts.push(act);
    }
    let x_cr = add_residual(&bilinear_demosaic(mosaic), residual)?;

    let mut refine_acts = Vec::new();
    let x_rr = if refine {
        let mut act = conv3x3(&x_cr.to_feature_map(), weights.refine_in()).map_err(shape_err)?;
        relu_in_place(&mut act);
        for block in weights.refine_blocks() {
            let mut next = conv3x3(&act, block).map_err(shape_err)?;
            relu_in_place(&mut next);
            if keep {
                refine_acts.push(std::mem::replace(&mut act, next));
            } else {
                act = next;
            }
        }
        let residual = conv3x3(&act, weights.refine_out()).map_err(shape_err)?;
        if keep {
            refine_acts.push(act);
        }
        Some(add_residual(&x_cr, residual)?)
    } else {
        None
    };

    Ok(ForwardTrace {
        input,
        recon_acts,
        x_cr,
        refine_acts,
        x_rr,
    })
}

fn add_residual<T: Scalar>(base: &PolStack<T>, residual: FeatureMap<T>) -> Result<PolStack<T>> {
    let residual = PolStack::from_feature_map(residual)?;
    base.zip_map(&residual, |a, b| a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pfa::{mosaic as make_mosaic, PfaPattern};
    use crate::ppdn::config::PpdnConfig;
    use crate::tensor::{conv3x3 as conv, relu, Plane};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mosaic(rng: &mut ChaCha8Rng, h: usize, w: usize) -> MosaicImage<f64> {
        MosaicImage::new(
            Plane::from_fn(h, w, |_, _| rng.random_range(0.0..1.0)),
            PfaPattern::imx250(),
        )
        .unwrap()
    }

    fn random_weights(rng: &mut ChaCha8Rng, cfg: PpdnConfig) -> PpdnWeights<f64> {
        let mut w = PpdnWeights::init_uniform(cfg, rng);
        for s in w.param_slices_mut() {
            for v in s {
                *v += rng.random_range(-0.05..0.05);
            }
        }
        w
    }

    #[test]
    fn zero_weights_reduce_to_bilinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = random_mosaic(&mut rng, 8, 10);
        let w = PpdnWeights::zeros(PpdnConfig::PPDN);
        let out = forward(&m, &w).unwrap();
        let bil = bilinear_demosaic(&m);
        assert_eq!(out.x_cr, bil);
        assert_eq!(out.x_rr, out.x_cr);
    }

    #[test]
    fn output_shape_matches_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_mosaic(&mut rng, 12, 6);
        let w = random_weights(&mut rng, PpdnConfig::new(2, 1, 3).unwrap());
        let out = forward(&m, &w).unwrap();
        assert_eq!(out.x_cr.dims(), (12, 6));
        assert_eq!(out.x_rr.dims(), (12, 6));
    }

    #[test]
    fn matches_layer_by_layer_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_mosaic(&mut rng, 8, 8);
        let cfg = PpdnConfig::new(2, 1, 3).unwrap();
        let w = random_weights(&mut rng, cfg);

        let y = FeatureMap::single(m.plane().clone());
        let mut a = relu(&conv(&y, w.head()).unwrap());
        for b in w.recon_blocks() {
            a = relu(&conv(&a, b).unwrap());
        }
        let r = conv(&a, w.recon_out()).unwrap();
        let bil = bilinear_demosaic(&m).to_feature_map();
        let x_cr = bil.zip_map(&r, |p, q| p + q).unwrap();
        let mut u = relu(&conv(&x_cr, w.refine_in()).unwrap());
        for b in w.refine_blocks() {
            u = relu(&conv(&u, b).unwrap());
        }
        let r2 = conv(&u, w.refine_out()).unwrap();
        let x_rr = x_cr.zip_map(&r2, |p, q| p + q).unwrap();

        let out = forward(&m, &w).unwrap();
        for c in 0..4 {
            for (a, b) in out.x_cr.channels()[c].data().iter().zip(x_cr.plane(c).data()) {
                assert!((a - b).abs() < 1e-10);
            }
            for (a, b) in out.x_rr.channels()[c].data().iter().zip(x_rr.plane(c).data()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn deterministic_across_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_mosaic(&mut rng, 16, 16);
        let w = random_weights(&mut rng, PpdnConfig::PPDN);
        assert_eq!(forward(&m, &w).unwrap(), forward(&m, &w).unwrap());
    }

    #[test]
    fn coarse_only_matches_full_coarse_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = crate::synth::textured_scene::<f64, _>(8, 8, &mut rng);
        let m = make_mosaic(&s, PfaPattern::imx250()).unwrap();
        let w = random_weights(&mut rng, PpdnConfig::new(1, 1, 4).unwrap());
        assert_eq!(forward_coarse(&m, &w).unwrap(), forward(&m, &w).unwrap().x_cr);
    }
}
