//! Reverse-mode gradients of the training loss with respect to every
//! network parameter.

use rayon::prelude::*;

use crate::error::Result;
use crate::pfa::{MosaicImage, PolStack};
use crate::ppdn::{forward_trace, PpdnWeights};
use crate::scalar::Scalar;
use crate::tensor::{conv3x3_backward, relu_backward, ConvKernel3x3, FeatureMap};

use super::loss::{evaluate_loss, LossBreakdown, LossVariant, LossWeights};

/// Loss, parameter gradients and the final prediction for one sample.
#[derive(Clone, Debug)]
pub struct SampleGradient<T> {
    pub grads: PpdnWeights<T>,
    pub loss: LossBreakdown,
    /// `x_rr`, or `x_cr` when the refining stage is removed.
    pub prediction: PolStack<T>,
}

fn store<T: Scalar>(dst: &mut ConvKernel3x3<T>, taps: &[T], bias: Option<&[T]>) {
    let (t, b) = dst.parts_mut();
    t.copy_from_slice(taps);
    if let (Some(b), Some(src)) = (b, bias) {
        b.copy_from_slice(src);
    }
}

/// Runs one residual branch backwards: `out(relu(block(...relu(entry(x)))))`.
///
/// `acts[0]` is the entry activation and `acts[j]` the output of block
/// `j - 1`. Returns the gradient with respect to the branch input when
/// `need_input` is set.
fn branch_backward<T: Scalar>(
    x: &FeatureMap<T>,
    acts: &[FeatureMap<T>],
    layers: &[ConvKernel3x3<T>],
    grads: &mut [ConvKernel3x3<T>],
    grad_out: &FeatureMap<T>,
    need_input: bool,
) -> Result<Option<FeatureMap<T>>> {
    let last = layers.len() - 1;
    let g = conv3x3_backward(&acts[last - 1], &layers[last], grad_out, true)?;
    store(&mut grads[last], &g.taps, g.bias.as_deref());
    let mut d = g.input.expect("requested");
    for j in (0..last).rev() {
        relu_backward(&acts[j], &mut d);
        let input = if j == 0 { x } else { &acts[j - 1] };
        let need = j > 0 || need_input;
        let g = conv3x3_backward(input, &layers[j], &d, need)?;
        store(&mut grads[j], &g.taps, g.bias.as_deref());
        match g.input {
            Some(next) => d = next,
            None => return Ok(None),
        }
    }
    Ok(Some(d))
}

/// Gradient of the loss for one (mosaic, truth) pair.
pub fn sample_gradient<T: Scalar>(
    mosaic: &MosaicImage<T>,
    weights: &PpdnWeights<T>,
    truth: &PolStack<T>,
    lw: &LossWeights,
    eps: T,
    variant: LossVariant,
) -> Result<SampleGradient<T>> {
    let refine = variant.uses_refine();
    let trace = forward_trace(mosaic, weights, refine)?;
    let (h, w) = mosaic.dims();
    let mut d_cr = PolStack::zeros(h, w);
    let mut d_rr = PolStack::zeros(h, w);
    let loss = evaluate_loss(
        &trace.x_cr,
        trace.x_rr.as_ref(),
        truth,
        lw,
        eps,
        variant,
        Some((&mut d_cr, &mut d_rr)),
    )?;

    let cfg = *weights.config();
    let mut grads = PpdnWeights::zeros(cfg);
    let split = cfg.refine_start();

    if refine {
        let d_rr_fm = d_rr.to_feature_map();
        let (_, refine_grads) = grads.layers_mut().split_at_mut(split);
        let d_in = branch_backward(
            &trace.x_cr.to_feature_map(),
            &trace.refine_acts,
            &weights.layers()[split..],
            refine_grads,
            &d_rr_fm,
            true,
        )?
        .expect("requested");
        // Identity skip plus the branch.
        d_cr = d_cr.zip_map(&d_rr, |a, b| a + b)?;
        d_cr = d_cr.zip_map(&PolStack::from_feature_map(d_in)?, |a, b| a + b)?;
    }

    let (recon_grads, _) = grads.layers_mut().split_at_mut(split);
    branch_backward(
        &trace.input,
        &trace.recon_acts,
        &weights.layers()[..split],
        recon_grads,
        &d_cr.to_feature_map(),
        false,
    )?;

    let prediction = match trace.x_rr {
        Some(x) => x,
        None => trace.x_cr,
    };
    Ok(SampleGradient {
        grads,
        loss,
        prediction,
    })
}

/// Mean gradient over a batch. Samples run in parallel; their gradients
/// are summed in batch order so the result does not depend on scheduling.
pub fn batch_gradient<T: Scalar>(
    batch: &[(MosaicImage<T>, PolStack<T>)],
    weights: &PpdnWeights<T>,
    lw: &LossWeights,
    eps: T,
    variant: LossVariant,
) -> Result<(PpdnWeights<T>, LossBreakdown, Vec<PolStack<T>>)> {
    let per: Vec<SampleGradient<T>> = batch
        .par_iter()
        .map(|(m, t)| sample_gradient(m, weights, t, lw, eps, variant))
        .collect::<Result<_>>()?;
    let mut total = PpdnWeights::zeros(*weights.config());
    let mut loss = LossBreakdown::default();
    let inv = 1.0 / batch.len().max(1) as f64;
    let mut predictions = Vec::with_capacity(per.len());
    for s in per {
        total.accumulate(&s.grads)?;
        loss.add_scaled(&s.loss, inv);
        predictions.push(s.prediction);
    }
    total.scale(T::of(inv));
    Ok((total, loss, predictions))
}
