//! Joint reconstruction loss and its derivative with respect to the
//! predicted stacks.
//!
//! The joint loss is
//!
//! ```text
//! w1 * (mae(X_cr, X) + mae(S0_cr, S0))
//! + w2 * (mae(X_rr, X) + mae(S0_rr, S0))
//! + w3 * (mae(S1_rr, S1) + mae(S2_rr, S2) + mae(DoLP_rr, DoLP))
//! + w4 * mae_aolp(AoLP_rr, AoLP)
//! ```
//!
//! With the refining stage removed the `w1` group is dropped and the
//! remaining groups are evaluated on `X_cr`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pfa::{PolAngle, PolStack};
use crate::ppdn::InferenceResult;
use crate::scalar::Scalar;
use crate::stokes::{normalized_angle, stokes_from_stack, StokesMaps};
use crate::tensor::Plane;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w1: 0.25,
            w2: 0.5,
            w3: 1.0,
            w4: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("w1", self.w1), ("w2", self.w2), ("w3", self.w3), ("w4", self.w4)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("loss weight {name} must be a nonnegative real, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossVariant {
    /// Two stages, circular angle loss.
    #[default]
    Full,
    /// Reconstruction stage only; loss groups evaluated on the coarse stack.
    NoRefine,
    /// Two stages with ordinary MAE on the angle map.
    PlainAolp,
}

impl LossVariant {
    pub fn uses_refine(self) -> bool {
        !matches!(self, LossVariant::NoRefine)
    }
}

impl std::str::FromStr for LossVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "no-refine" => Ok(Self::NoRefine),
            "plain-aolp" => Ok(Self::PlainAolp),
            _ => Err(Error::Config(format!(
                "unknown loss `{s}` (expected full, no-refine or plain-aolp)"
            ))),
        }
    }
}

/// Unweighted terms plus the weighted total.
///
/// `coarse_*` are the `w1` group; `final_*` are evaluated on the refined
/// stack, or on the coarse stack when the refining stage is removed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub coarse_stack: f64,
    pub coarse_s0: f64,
    pub final_stack: f64,
    pub final_s0: f64,
    pub final_s1: f64,
    pub final_s2: f64,
    pub final_dolp: f64,
    pub final_aolp: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub(crate) fn add_scaled(&mut self, other: &Self, s: f64) {
        self.coarse_stack += s * other.coarse_stack;
        self.coarse_s0 += s * other.coarse_s0;
        self.final_stack += s * other.final_stack;
        self.final_s0 += s * other.final_s0;
        self.final_s1 += s * other.final_s1;
        self.final_s2 += s * other.final_s2;
        self.final_dolp += s * other.final_dolp;
        self.final_aolp += s * other.final_aolp;
        self.total += s * other.total;
    }
}

/// Anything exposing its samples as a fixed sequence of slices.
pub trait Samples<T> {
    fn sample_slices(&self) -> Vec<&[T]>;
}

impl<T: Scalar> Samples<T> for Plane<T> {
    fn sample_slices(&self) -> Vec<&[T]> {
        vec![self.data()]
    }
}

impl<T: Scalar> Samples<T> for PolStack<T> {
    fn sample_slices(&self) -> Vec<&[T]> {
        self.channels().iter().map(Plane::data).collect()
    }
}

/// Mean absolute error over every sample.
pub fn mae<T: Scalar, S: Samples<T>>(a: &S, b: &S) -> Result<T> {
    let (sa, sb) = (a.sample_slices(), b.sample_slices());
    if sa.len() != sb.len() || sa.iter().zip(&sb).any(|(x, y)| x.len() != y.len()) {
        return Err(Error::contract("mae: shape mismatch"));
    }
    let mut sum = T::zero();
    let mut n = 0usize;
    for (x, y) in sa.iter().zip(&sb) {
        for (p, q) in x.iter().zip(y.iter()) {
            sum += (*p - *q).abs();
        }
        n += x.len();
    }
    Ok(sum / T::of(n as f64))
}

/// Distance between two normalized angles on the unit circle of period 1.
#[inline]
pub fn circular_distance<T: Scalar>(a: T, b: T) -> T {
    let d = (a - b).abs();
    d.min(T::one() - d)
}

/// Mean circular distance between two normalized angle maps.
pub fn mae_aolp<T: Scalar>(reference: &Plane<T>, estimate: &Plane<T>) -> Result<T> {
    reference.check_same_dims(estimate)?;
    let sum: T = reference
        .data()
        .iter()
        .zip(estimate.data())
        .map(|(&r, &e)| circular_distance(r, e))
        .sum();
    Ok(sum / T::of(reference.len() as f64))
}

#[inline]
fn sgn<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Derivative of `circular_distance(est, ref)` with respect to `est`.
/// At the 0.5 tie the first branch (`|d|`) is used.
#[inline]
fn circular_slope<T: Scalar>(est: T, reference: T) -> T {
    let d = est - reference;
    let ad = d.abs();
    if ad <= T::one() - ad {
        sgn(d)
    } else {
        -sgn(d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum AngleLoss {
    Circular,
    Plain,
}

/// Weights for one group evaluation.
#[derive(Clone, Copy, Debug)]
pub(crate) struct GroupWeights {
    pub intensity: f64,
    pub polar: Option<(f64, f64, AngleLoss)>,
}

/// Unweighted terms of one group.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct GroupTerms {
    pub stack: f64,
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub dolp: f64,
    pub aolp: f64,
}

/// Evaluates one loss group on `pred` and, if `grad` is given, adds its
/// weighted derivative with respect to `pred` into `grad`.
pub(crate) fn group_loss<T: Scalar>(
    pred: &PolStack<T>,
    truth: &PolStack<T>,
    truth_maps: &StokesMaps<T>,
    eps: T,
    weights: GroupWeights,
    mut grad: Option<&mut PolStack<T>>,
) -> GroupTerms {
    let n = pred.height() * pred.width();
    let nf = T::of(n as f64);
    let half = T::of(0.5);
    let angle_scale = T::of(0.5) / T::PI();
    let wi = T::of(weights.intensity);
    let p: [&[T]; 4] = PolAngle::ALL.map(|a| pred.channel(a).data());
    let t: [&[T]; 4] = PolAngle::ALL.map(|a| truth.channel(a).data());

    let mut sum_stack = T::zero();
    let mut sum_s0 = T::zero();
    let mut sum_s1 = T::zero();
    let mut sum_s2 = T::zero();
    let mut sum_dolp = T::zero();
    let mut sum_aolp = T::zero();

    let mut grad_buf: Option<[&mut [T]; 4]> = grad.as_mut().map(|g| {
        let [a, b, c, d] = g.channels_mut();
        [a.data_mut(), b.data_mut(), c.data_mut(), d.data_mut()]
    });

    for px in 0..n {
        let i = [p[0][px], p[1][px], p[2][px], p[3][px]];
        let mut gi = [T::zero(); 4];
        for c in 0..4 {
            let e = i[c] - t[c][px];
            sum_stack += e.abs();
            gi[c] = wi * sgn(e) / (T::of(4.0) * nf);
        }
        let s0 = half * (i[0] + i[1] + i[2] + i[3]);
        let e0 = s0 - truth_maps.s0.data()[px];
        sum_s0 += e0.abs();
        let mut g_s0 = wi * sgn(e0) / nf;
        let mut g_s1 = T::zero();
        let mut g_s2 = T::zero();

        if let Some((w3, w4, angle_loss)) = weights.polar {
            let (w3, w4) = (T::of(w3), T::of(w4));
            let s1 = i[0] - i[2];
            let s2 = i[1] - i[3];
            let e1 = s1 - truth_maps.s1.data()[px];
            let e2 = s2 - truth_maps.s2.data()[px];
            sum_s1 += e1.abs();
            sum_s2 += e2.abs();
            g_s1 += w3 * sgn(e1) / nf;
            g_s2 += w3 * sgn(e2) / nf;

            let q = s1 * s1 + s2 * s2;
            let r = q.sqrt();
            let den = s0 + eps;
            let dolp = r / den;
            let ed = dolp - truth_maps.dolp.data()[px];
            sum_dolp += ed.abs();
            let gd = w3 * sgn(ed) / nf;
            if r > T::zero() {
                g_s1 += gd * s1 / (r * den);
                g_s2 += gd * s2 / (r * den);
                g_s0 -= gd * r / (den * den);
            }

            let angle = normalized_angle(s1, s2);
            let ta = truth_maps.aolp.data()[px];
            let slope = match angle_loss {
                AngleLoss::Circular => {
                    sum_aolp += circular_distance(angle, ta);
                    circular_slope(angle, ta)
                }
                AngleLoss::Plain => {
                    sum_aolp += (angle - ta).abs();
                    sgn(angle - ta)
                }
            };
            if q > T::zero() {
                let ga = w4 * slope / nf * angle_scale;
                g_s1 -= ga * s2 / q;
                g_s2 += ga * s1 / q;
            }
        }

        if let Some(g) = grad_buf.as_mut() {
            g[0][px] += gi[0] + half * g_s0 + g_s1;
            g[1][px] += gi[1] + half * g_s0 + g_s2;
            g[2][px] += gi[2] + half * g_s0 - g_s1;
            g[3][px] += gi[3] + half * g_s0 - g_s2;
        }
    }

    let f = |s: T| s.to_f64_lossy() / n as f64;
    GroupTerms {
        stack: sum_stack.to_f64_lossy() / (4 * n) as f64,
        s0: f(sum_s0),
        s1: f(sum_s1),
        s2: f(sum_s2),
        dolp: f(sum_dolp),
        aolp: f(sum_aolp),
    }
}

/// Loss terms and optional gradients for a whole prediction.
pub(crate) fn evaluate_loss<T: Scalar>(
    x_cr: &PolStack<T>,
    x_rr: Option<&PolStack<T>>,
    truth: &PolStack<T>,
    lw: &LossWeights,
    eps: T,
    variant: LossVariant,
    grads: Option<(&mut PolStack<T>, &mut PolStack<T>)>,
) -> Result<LossBreakdown> {
    truth.check_same_dims(x_cr)?;
    let truth_maps = stokes_from_stack(truth, eps);
    let angle_loss = match variant {
        LossVariant::PlainAolp => AngleLoss::Plain,
        _ => AngleLoss::Circular,
    };
    let final_weights = GroupWeights {
        intensity: lw.w2,
        polar: Some((lw.w3, lw.w4, angle_loss)),
    };
    let (g_cr, g_rr) = match grads {
        Some((a, b)) => (Some(a), Some(b)),
        None => (None, None),
    };
    let mut out = LossBreakdown::default();
    let fin = match variant {
        LossVariant::NoRefine => group_loss(x_cr, truth, &truth_maps, eps, final_weights, g_cr),
        LossVariant::Full | LossVariant::PlainAolp => {
            let x_rr = x_rr.ok_or_else(|| Error::contract("refined stack required for this loss"))?;
            truth.check_same_dims(x_rr)?;
            let coarse = group_loss(
                x_cr,
                truth,
                &truth_maps,
                eps,
                GroupWeights {
                    intensity: lw.w1,
                    polar: None,
                },
                g_cr,
            );
            out.coarse_stack = coarse.stack;
            out.coarse_s0 = coarse.s0;
            group_loss(x_rr, truth, &truth_maps, eps, final_weights, g_rr)
        }
    };
    out.final_stack = fin.stack;
    out.final_s0 = fin.s0;
    out.final_s1 = fin.s1;
    out.final_s2 = fin.s2;
    out.final_dolp = fin.dolp;
    out.final_aolp = fin.aolp;
    out.total = lw.w1 * (out.coarse_stack + out.coarse_s0)
        + lw.w2 * (out.final_stack + out.final_s0)
        + lw.w3 * (out.final_s1 + out.final_s2 + out.final_dolp)
        + lw.w4 * out.final_aolp;
    Ok(out)
}

/// The joint two-stage loss.
pub fn loss_total<T: Scalar>(
    result: &InferenceResult<T>,
    truth: &PolStack<T>,
    lw: &LossWeights,
    eps: T,
) -> Result<LossBreakdown> {
    evaluate_loss(&result.x_cr, Some(&result.x_rr), truth, lw, eps, LossVariant::Full, None)
}

/// The loss used when the refining stage is removed.
pub fn loss_no_refine<T: Scalar>(
    x_cr: &PolStack<T>,
    truth: &PolStack<T>,
    lw: &LossWeights,
    eps: T,
) -> Result<LossBreakdown> {
    evaluate_loss(x_cr, None, truth, lw, eps, LossVariant::NoRefine, None)
}

pub fn loss_for_variant<T: Scalar>(
    result: &InferenceResult<T>,
    truth: &PolStack<T>,
    lw: &LossWeights,
    eps: T,
    variant: LossVariant,
) -> Result<LossBreakdown> {
    evaluate_loss(&result.x_cr, Some(&result.x_rr), truth, lw, eps, variant, None)
}
