//! The stacked graph-convolution step estimator.
//!
//! One application of the network maps the last `e` infection vectors to an
//! estimate of the next one. The estimate is clamped between the previous
//! vector and a union-bound upper bound, so each step is monotone and never
//! overshoots what the cascade could reach in one hop.

mod checkpoint;
mod features;
mod forward;
mod inference;
mod params;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use features::{build_features, upper_bound};
pub use forward::{
    backward, forward_step, forward_step_with, forward_trace, loss, loss_and_grad, StepTrace, StepWorkspace,
};
pub use inference::{estimate_influence, estimate_influence_with, stacked_inference, surrogate_influence, StackedEstimate};
pub use params::{Hyper, LayerParams, ModelParams};
pub use train::{evaluate_loss, learning_rate, train, EpochStats, Optimizer, TrainConfig, TrainOutcome};
