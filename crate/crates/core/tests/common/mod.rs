//! Shared oracles for the integration tests.
#![allow(dead_code)]

use polarmosaic::train::{circular_distance, loss_for_variant, loss_no_refine, sample_gradient, LossVariant, LossWeights};
use polarmosaic::{
    bilinear_demosaic, conv3x3, forward, mosaic, stokes_from_stack, FeatureMap, MosaicImage, PfaPattern, Plane,
    PolStack, PpdnConfig, PpdnWeights, TRAIN_EPS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn relu_fm(fm: &FeatureMap<f64>) -> FeatureMap<f64> {
    fm.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Layer-by-layer forward pass built from the public convolution, keeping
/// every ReLU pre-activation.
pub struct OracleForward {
    pub x_cr: PolStack<f64>,
    pub x_rr: PolStack<f64>,
    pub pre_acts: Vec<FeatureMap<f64>>,
}

pub fn oracle_forward(m: &MosaicImage<f64>, w: &PpdnWeights<f64>) -> OracleForward {
    let mut pre_acts = Vec::new();
    let input = FeatureMap::single(m.plane().clone());
    let mut z = conv3x3(&input, w.head()).unwrap();
    let mut a = relu_fm(&z);
    pre_acts.push(z);
    for b in w.recon_blocks() {
        z = conv3x3(&a, b).unwrap();
        a = relu_fm(&z);
        pre_acts.push(z);
    }
    let r = conv3x3(&a, w.recon_out()).unwrap();
    let x_cr = bilinear_demosaic(m).zip_map(&PolStack::from_feature_map(r).unwrap(), |p, q| p + q).unwrap();
    z = conv3x3(&x_cr.to_feature_map(), w.refine_in()).unwrap();
    a = relu_fm(&z);
    pre_acts.push(z);
    for b in w.refine_blocks() {
        z = conv3x3(&a, b).unwrap();
        a = relu_fm(&z);
        pre_acts.push(z);
    }
    let r = conv3x3(&a, w.refine_out()).unwrap();
    let x_rr = x_cr.zip_map(&PolStack::from_feature_map(r).unwrap(), |p, q| p + q).unwrap();
    OracleForward { x_cr, x_rr, pre_acts }
}

/// Index of each ReLU layer in storage order.
fn relu_layer_indices(cfg: &PpdnConfig) -> Vec<usize> {
    let m = cfg.recon_blocks;
    let n = cfg.refine_blocks;
    let mut v: Vec<usize> = (0..=m).collect();
    v.extend(m + 2..=m + 2 + n);
    v
}

/// Shifts every ReLU channel's bias so zero falls in the widest gap of its
/// central pre-activation values: each unit then sits clearly on one side.
fn separate_relu_kinks(m: &MosaicImage<f64>, w: &mut PpdnWeights<f64>) {
    let layers = relu_layer_indices(w.config());
    for (pos, &li) in layers.iter().enumerate() {
        let z = &oracle_forward(m, w).pre_acts[pos];
        let mut shifts = Vec::new();
        for c in 0..z.channels() {
            let mut vals = z.plane(c).data().to_vec();
            vals.sort_by(f64::total_cmp);
            let n = vals.len();
            let (mut best, mut t) = (-1.0, 0.0);
            for i in n / 4..(3 * n / 4) {
                let gap = vals[i + 1] - vals[i];
                if gap > best {
                    best = gap;
                    t = 0.5 * (vals[i] + vals[i + 1]);
                }
            }
            shifts.push(t);
        }
        let bias = w.layers_mut()[li].bias_mut().unwrap();
        for (b, t) in bias.iter_mut().zip(shifts) {
            *b -= t;
        }
    }
}

fn stokes3(i: [f64; 4]) -> (f64, f64, f64) {
    (0.5 * (i[0] + i[1] + i[2] + i[3]), i[0] - i[2], i[1] - i[3])
}

fn dolp_aolp(s0: f64, s1: f64, s2: f64) -> (f64, f64) {
    let r = (s1 * s1 + s2 * s2).sqrt();
    let mut a = 0.5 * s2.atan2(s1) / std::f64::consts::PI;
    if a < 0.0 {
        a += 1.0;
    }
    if a >= 1.0 {
        a -= 1.0;
    }
    (r / (s0 + TRAIN_EPS), a)
}

fn pixel(s: &PolStack<f64>, p: usize) -> [f64; 4] {
    std::array::from_fn(|c| s.channels()[c].data()[p])
}

/// Ground truth placed a clear distance from both predictions in every
/// loss argument.
fn truth_with_margins(rng: &mut ChaCha8Rng, cr: &PolStack<f64>, rr: &PolStack<f64>) -> PolStack<f64> {
    let (h, w) = cr.dims();
    let mut out: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; h * w]);
    for p in 0..h * w {
        let preds = [pixel(cr, p), pixel(rr, p)];
        let s0p = stokes3(preds[1]).0;
        let found = (0..100_000).find_map(|_| {
            let s0 = s0p + rng.random_range(0.3..0.4);
            let r = s0 * rng.random_range(0.05..0.95);
            let phi = 2.0 * std::f64::consts::PI * rng.random_range(0.0..1.0);
            let (s1, s2) = (r * phi.cos(), r * phi.sin());
            let t = [(s0 + s1) / 2.0, (s0 + s2) / 2.0, (s0 - s1) / 2.0, (s0 - s2) / 2.0];
            let (dt, at) = dolp_aolp(s0, s1, s2);
            let ok = preds.iter().all(|q| {
                let (a0, a1, a2) = stokes3(*q);
                let (dq, aq) = dolp_aolp(a0, a1, a2);
                let cd = circular_distance(aq, at);
                (0..4).all(|c| (q[c] - t[c]).abs() > 0.05)
                    && (a0 - s0).abs() > 0.05
                    && (a1 - s1).abs() > 0.05
                    && (a2 - s2).abs() > 0.05
                    && (dq - dt).abs() > 0.02
                    && cd > 0.02
                    && cd < 0.48
            });
            ok.then_some(t)
        });
        let t = found.unwrap_or_else(|| panic!("no margin truth at pixel {p}: cr {:?} rr {:?}", preds[0], preds[1]));
        for c in 0..4 {
            out[c][p] = t[c];
        }
    }
    PolStack::from_channels(out.map(|d| Plane::new(h, w, d).unwrap())).unwrap()
}

/// Signs of every non-smooth quantity in the loss and the network.
fn kink_signature(m: &MosaicImage<f64>, w: &PpdnWeights<f64>, truth: &PolStack<f64>) -> (Vec<bool>, f64) {
    let f = oracle_forward(m, w);
    let mut sig = Vec::new();
    let mut margin = f64::INFINITY;
    for z in &f.pre_acts {
        for p in z.planes() {
            for &v in p.data() {
                sig.push(v > 0.0);
                margin = margin.min(v.abs());
            }
        }
    }
    let t = stokes_from_stack(truth, TRAIN_EPS);
    for pred in [&f.x_cr, &f.x_rr] {
        let s = stokes_from_stack(pred, TRAIN_EPS);
        let mut push = |a: &Plane<f64>, b: &Plane<f64>| {
            for (x, y) in a.data().iter().zip(b.data()) {
                sig.push(x > y);
                margin = margin.min((x - y).abs());
            }
        };
        for c in 0..4 {
            push(&pred.channels()[c], &truth.channels()[c]);
        }
        push(&s.s0, &t.s0);
        push(&s.s1, &t.s1);
        push(&s.s2, &t.s2);
        push(&s.dolp, &t.dolp);
        for (x, y) in s.aolp.data().iter().zip(t.aolp.data()) {
            let d = circular_distance(*x, *y);
            margin = margin.min(d).min(0.5 - d);
            // Which way the circular distance grows.
            let dd = x - y;
            sig.push((dd.abs() <= 0.5) == (dd > 0.0));
        }
    }
    (sig, margin)
}

pub struct GradientPoint {
    pub mosaic: MosaicImage<f64>,
    pub weights: PpdnWeights<f64>,
    pub truth: PolStack<f64>,
}

/// A random point of the toy network with every kink at least a fixed
/// distance away.
pub fn gradient_point(seed: u64, cfg: PpdnConfig, size: usize) -> GradientPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = polarmosaic::synth::textured_scene::<f64, _>(size, size, &mut rng);
    let m = mosaic(&scene, PfaPattern::imx250()).unwrap();
    let mut w = PpdnWeights::init_uniform(cfg, &mut rng);
    for s in w.param_slices_mut() {
        for v in s {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    // Keep the refined stack near the coarse one so a single truth keeps
    // margins from both.
    let last = w.layers().len() - 1;
    let out = &mut w.layers_mut()[last];
    for v in out.taps_mut() {
        *v *= 0.01;
    }
    for v in out.bias_mut().unwrap() {
        *v *= 0.01;
    }
    separate_relu_kinks(&m, &mut w);
    let f = oracle_forward(&m, &w);
    let truth = truth_with_margins(&mut rng, &f.x_cr, &f.x_rr);
    GradientPoint {
        mosaic: m,
        weights: w,
        truth,
    }
}

fn loss_at(pt: &GradientPoint, w: &PpdnWeights<f64>, lw: &LossWeights, variant: LossVariant) -> f64 {
    let res = forward(&pt.mosaic, w).unwrap();
    match variant {
        LossVariant::NoRefine => loss_no_refine(&res.x_cr, &pt.truth, lw, TRAIN_EPS).unwrap().total,
        v => loss_for_variant(&res, &pt.truth, lw, TRAIN_EPS, v).unwrap().total,
    }
}

fn perturbed(w: &PpdnWeights<f64>, idx: usize, delta: f64) -> PpdnWeights<f64> {
    let mut out = w.clone();
    let mut k = idx;
    for s in out.param_slices_mut() {
        if k < s.len() {
            s[k] += delta;
            break;
        }
        k -= s.len();
    }
    out
}

#[derive(Debug)]
pub struct FdReport {
    pub params: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// Smallest distance of any kink argument from its kink at the point.
    pub kink_margin: f64,
}

/// Relative error with an absolute floor for parameters whose gradient
/// vanishes (dead ReLU channels).
pub const REL_FLOOR: f64 = 1e-6;

/// Central differences with step `h` over every parameter.
pub fn finite_difference_check(pt: &GradientPoint, lw: &LossWeights, variant: LossVariant, h: f64) -> FdReport {
    let analytic = sample_gradient(&pt.mosaic, &pt.weights, &pt.truth, lw, TRAIN_EPS, variant)
        .unwrap()
        .grads
        .to_flat();
    let (base_sig, kink_margin) = kink_signature(&pt.mosaic, &pt.weights, &pt.truth);
    let mut report = FdReport {
        params: analytic.len(),
        max_rel_err: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        kink_margin,
    };
    for (i, &a) in analytic.iter().enumerate() {
        let wp = perturbed(&pt.weights, i, h);
        let wm = perturbed(&pt.weights, i, -h);
        for probe in [&wp, &wm] {
            assert!(
                kink_signature(&pt.mosaic, probe, &pt.truth).0 == base_sig,
                "probe of parameter {i} crosses a kink; the point is degenerate"
            );
        }
        let n = (loss_at(pt, &wp, lw, variant) - loss_at(pt, &wm, lw, variant)) / (2.0 * h);
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR);
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_index = i;
            report.analytic = a;
            report.numeric = n;
        }
    }
    report
}
