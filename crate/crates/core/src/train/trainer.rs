use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{psnr_from_mse, Psnr};
use crate::pfa::{PfaPattern, PolStack};
use crate::ppdn::{PpdnConfig, PpdnWeights};
use crate::scalar::Scalar;
use crate::stokes::{stokes_from_stack, EVAL_EPS, TRAIN_EPS};

use super::adam::{adam_step, AdamConfig, AdamState, LrSchedule};
use super::backward::batch_gradient;
use super::loss::{circular_distance, LossBreakdown, LossVariant, LossWeights};
use super::sample::{sample_patch, AugmentMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub patch: usize,
    pub batch: usize,
    pub lr0: f64,
    pub decay_every: u64,
    pub decay_factor: f64,
    pub total_iters: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub loss_eps: f64,
    pub variant: LossVariant,
    pub augment: AugmentMode,
    pub pattern: PfaPattern,
    /// Metrics are computed every `log_every` steps and on the last step.
    pub log_every: u64,
    pub init: InitScheme,
}

/// Starting weights for a fresh run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// Fan-in scaled uniform taps in every layer.
    FanIn,
    /// Fan-in scaled hidden layers, zero residual outputs: training starts
    /// from the bilinear estimate.
    #[default]
    ZeroResidual,
}

impl std::str::FromStr for InitScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fan-in" => Ok(Self::FanIn),
            "zero-residual" => Ok(Self::ZeroResidual),
            _ => Err(Error::Config(format!(
                "unknown init `{s}` (expected fan-in or zero-residual)"
            ))),
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            patch: 64,
            batch: 16,
            lr0: 3e-4,
            decay_every: 48_000,
            decay_factor: 0.1,
            total_iters: 96_000,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            loss_eps: TRAIN_EPS,
            variant: LossVariant::Full,
            augment: AugmentMode::Physical,
            pattern: PfaPattern::imx250(),
            log_every: 100,
            init: InitScheme::ZeroResidual,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch < 4 || self.patch % 2 != 0 {
            return Err(Error::Config(format!("patch must be even and at least 4, got {}", self.patch)));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if self.decay_every == 0 || self.log_every == 0 {
            return Err(Error::Config("decay_every and log_every must be positive".into()));
        }
        // lr0 = 0 is accepted: it freezes the weights, which is useful for checks.
        for (name, v) in [
            ("lr0", self.lr0),
            ("decay_factor", self.decay_factor),
            ("adam_eps", self.adam_eps),
            ("loss_eps", self.loss_eps),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be a nonnegative real, got {v}")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            lr0: self.lr0,
            decay_every: self.decay_every,
            decay_factor: self.decay_factor,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    /// 0-based index of the step just taken.
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub terms: LossBreakdown,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psnr_s0: Option<Psnr>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psnr_dolp: Option<Psnr>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psnr_aolp: Option<Psnr>,
}

/// Optimizer moments, step counter and sampling PRNG.
#[derive(Clone, Debug)]
pub struct TrainState<T> {
    pub adam: AdamState<T>,
    pub rng: ChaCha8Rng,
}

pub struct Trainer<'a, T> {
    scenes: &'a [PolStack<T>],
    cfg: TrainConfig,
    lw: LossWeights,
    weights: PpdnWeights<T>,
    state: TrainState<T>,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    /// Fresh weights drawn from the seeded PRNG, which then drives sampling.
    pub fn new(scenes: &'a [PolStack<T>], net: PpdnConfig, cfg: TrainConfig, lw: LossWeights) -> Result<Self> {
        net.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let weights = match cfg.init {
            InitScheme::FanIn => PpdnWeights::init_uniform(net, &mut rng),
            InitScheme::ZeroResidual => PpdnWeights::init_zero_residual(net, &mut rng),
        };
        Self::build(scenes, weights, cfg, lw, rng)
    }

    /// Continue from existing weights with fresh optimizer moments.
    pub fn with_weights(
        scenes: &'a [PolStack<T>],
        weights: PpdnWeights<T>,
        cfg: TrainConfig,
        lw: LossWeights,
    ) -> Result<Self> {
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self::build(scenes, weights, cfg, lw, rng)
    }

    fn build(
        scenes: &'a [PolStack<T>],
        weights: PpdnWeights<T>,
        cfg: TrainConfig,
        lw: LossWeights,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        lw.validate()?;
        if scenes.is_empty() {
            return Err(Error::Config("no training scenes".into()));
        }
        for (i, s) in scenes.iter().enumerate() {
            let (h, w) = s.dims();
            if h < cfg.patch || w < cfg.patch {
                return Err(Error::Config(format!(
                    "training scene {i} is {h}x{w}, smaller than the {} pixel patch",
                    cfg.patch
                )));
            }
        }
        let adam = AdamState::new(&weights);
        Ok(Self {
            scenes,
            cfg,
            lw,
            weights,
            state: TrainState { adam, rng },
        })
    }

    pub fn weights(&self) -> &PpdnWeights<T> {
        &self.weights
    }

    pub fn into_weights(self) -> PpdnWeights<T> {
        self.weights
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn state(&self) -> &TrainState<T> {
        &self.state
    }

    /// Number of steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.state.adam.step
    }

    pub fn is_done(&self) -> bool {
        self.step_count() >= self.cfg.total_iters
    }

    /// Sample a batch, take one optimizer step, and report the batch loss.
    pub fn step(&mut self) -> Result<TrainLogEntry> {
        let step = self.state.adam.step;
        let batch = (0..self.cfg.batch)
            .map(|_| {
                let idx = self.state.rng.random_range(0..self.scenes.len());
                sample_patch(
                    &self.scenes[idx],
                    self.cfg.patch,
                    self.cfg.pattern,
                    self.cfg.augment,
                    &mut self.state.rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let eps = T::of(self.cfg.loss_eps);
        let (grads, terms, predictions) = batch_gradient(&batch, &self.weights, &self.lw, eps, self.cfg.variant)?;
        if !terms.total.is_finite() || grads.to_flat().iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite loss or gradient at step {step}: {terms:?}"
            )));
        }
        let lr = self.cfg.schedule().lr(step);
        adam_step(&mut self.weights, &grads, &mut self.state.adam, &self.cfg.adam(), lr)?;

        let with_metrics = (step + 1) % self.cfg.log_every == 0 || step + 1 == self.cfg.total_iters;
        let (psnr_s0, psnr_dolp, psnr_aolp) = if with_metrics {
            let truths: Vec<&PolStack<T>> = batch.iter().map(|(_, t)| t).collect();
            let [a, b, c] = batch_psnr(&predictions, &truths);
            (Some(a), Some(b), Some(c))
        } else {
            (None, None, None)
        };
        Ok(TrainLogEntry {
            step,
            lr,
            loss: terms.total,
            terms,
            psnr_s0,
            psnr_dolp,
            psnr_aolp,
        })
    }
}

/// S0, DoLP and AoLP PSNR pooled over a batch.
fn batch_psnr<T: Scalar>(predictions: &[PolStack<T>], truths: &[&PolStack<T>]) -> [Psnr; 3] {
    let eps = T::of(EVAL_EPS);
    let mut se = [0.0f64; 3];
    let mut n = 0usize;
    for (p, t) in predictions.iter().zip(truths) {
        let a = stokes_from_stack(p, eps);
        let b = stokes_from_stack(t, eps);
        for (x, y) in a.s0.data().iter().zip(b.s0.data()) {
            se[0] += (*x - *y).to_f64_lossy().powi(2);
        }
        for (x, y) in a.dolp.data().iter().zip(b.dolp.data()) {
            se[1] += (*x - *y).to_f64_lossy().powi(2);
        }
        for (x, y) in a.aolp.data().iter().zip(b.aolp.data()) {
            se[2] += circular_distance(*x, *y).to_f64_lossy().powi(2);
        }
        n += a.s0.len();
    }
    let n = n.max(1) as f64;
    [
        psnr_from_mse(se[0] / n, 2.0),
        psnr_from_mse(se[1] / n, 1.0),
        psnr_from_mse(se[2] / n, 1.0),
    ]
}

/// Result of a complete training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub weights: PpdnWeights<T>,
    /// Batch loss of every step.
    pub losses: Vec<f64>,
}

/// Runs `cfg.total_iters` steps from fresh weights. `on_step` sees every
/// log entry with the weights after that step, e.g. for logging or
/// checkpointing.
pub fn train_loop<T: Scalar>(
    scenes: &[PolStack<T>],
    net: PpdnConfig,
    cfg: &TrainConfig,
    lw: &LossWeights,
    mut on_step: impl FnMut(&TrainLogEntry, &PpdnWeights<T>) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    let mut trainer = Trainer::new(scenes, net, cfg.clone(), *lw)?;
    let mut losses = Vec::with_capacity(cfg.total_iters as usize);
    while !trainer.is_done() {
        let entry = trainer.step()?;
        losses.push(entry.loss);
        on_step(&entry, trainer.weights())?;
    }
    Ok(TrainOutcome {
        weights: trainer.into_weights(),
        losses,
    })
}

/// Trailing moving average with the given window.
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::textured_scene;

    fn scenes(n: usize, size: usize) -> Vec<PolStack<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        (0..n).map(|_| textured_scene(size, size, &mut rng)).collect()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            patch: 16,
            batch: 2,
            total_iters: 6,
            log_every: 3,
            lr0: 1e-3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { patch: 6, ..Default::default() }.validate().is_ok());
        assert!(TrainConfig { patch: 7, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { patch: 2, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lr0: f64::NAN, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn zero_learning_rate_freezes_weights() {
        let data = scenes(2, 24);
        let cfg = TrainConfig { lr0: 0.0, ..small_cfg() };
        let net = PpdnConfig::new(1, 1, 4).unwrap();
        let start = Trainer::new(&data, net, cfg.clone(), LossWeights::default()).unwrap().weights().clone();
        let out = train_loop(&data, net, &cfg, &LossWeights::default(), |_, _| Ok(())).unwrap();
        assert_eq!(out.weights, start);
        assert_eq!(out.losses.len(), 6);
    }

    #[test]
    fn repeated_runs_match_bitwise() {
        let data = scenes(2, 24);
        let net = PpdnConfig::new(1, 1, 4).unwrap();
        let run = || train_loop(&data, net, &small_cfg(), &LossWeights::default(), |_, _| Ok(())).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn metrics_only_on_log_steps() {
        let data = scenes(1, 16);
        let mut seen = Vec::new();
        train_loop(&data, PpdnConfig::new(1, 1, 2).unwrap(), &small_cfg(), &LossWeights::default(), |e, _| {
            seen.push((e.step, e.psnr_s0.is_some()));
            Ok(())
        })
        .unwrap();
        assert_eq!(
            seen,
            vec![(0, false), (1, false), (2, true), (3, false), (4, false), (5, true)]
        );
    }

    #[test]
    fn empty_or_small_scenes_rejected() {
        let net = PpdnConfig::PPDN;
        assert!(Trainer::<f64>::new(&[], net, small_cfg(), LossWeights::default()).is_err());
        let data = scenes(1, 8);
        assert!(Trainer::new(&data, net, small_cfg(), LossWeights::default()).is_err());
    }

    #[test]
    fn smoothing_window() {
        assert_eq!(smoothed(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
    }
}
