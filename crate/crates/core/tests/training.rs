use polarmosaic::synth::textured_scene;
use polarmosaic::train::{smoothed, train_loop, LossVariant, LossWeights, TrainConfig};
use polarmosaic::{PolStack, PpdnConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scenes() -> Vec<PolStack<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    (0..4).map(|_| textured_scene(40, 40, &mut rng)).collect()
}

fn smoke(variant: LossVariant) -> Vec<f64> {
    let cfg = TrainConfig {
        patch: 16,
        batch: 2,
        total_iters: 200,
        log_every: 50,
        variant,
        ..TrainConfig::default()
    };
    let mut logged = 0;
    let out = train_loop(&scenes(), PpdnConfig::PPDN, &cfg, &LossWeights::default(), |e, _| {
        logged += usize::from(e.psnr_s0.is_some());
        Ok(())
    })
    .unwrap();
    assert_eq!(logged, 4);
    assert!(out.losses.iter().all(|l| l.is_finite()));
    out.losses
}

#[test]
fn smoothed_loss_decreases_over_a_short_run() {
    for variant in [LossVariant::Full, LossVariant::NoRefine] {
        let s = smoothed(&smoke(variant), 50);
        assert!(s[199] < s[49], "{variant:?}: {} -> {}", s[49], s[199]);
    }
}
