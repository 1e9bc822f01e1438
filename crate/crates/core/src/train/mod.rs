//! Supervised training: data loading, bucketed batching, optimization,
//! metrics, checkpoint cadence.

mod loop_;
pub mod optim;

pub use loop_::{
    evaluate_losses, train, LossBreakdown, MetricsRow, TrainConfig, TrainError, TrainOutput,
};
