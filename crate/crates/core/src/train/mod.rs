//! Training: loss, gradients, optimizer, sampling and the step loop.

mod adam;
mod backward;
mod loss;
mod sample;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState, LrSchedule};
pub use backward::{batch_gradient, sample_gradient, SampleGradient};
pub use loss::{
    circular_distance, loss_for_variant, loss_no_refine, loss_total, mae, mae_aolp, LossBreakdown, LossVariant,
    LossWeights, Samples,
};
pub use sample::{augment, sample_patch, AugmentMode, Transform};
pub use trainer::{smoothed, train_loop, InitScheme, TrainConfig, TrainLogEntry, TrainOutcome, TrainState, Trainer};
