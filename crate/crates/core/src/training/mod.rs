//! Loss, metrics, optimizers, learning-rate schedule and the training loop.

mod metrics;
mod optim;
mod run;
mod schedule;

pub use metrics::{accuracy, accuracy_of, class_weights, mean_std, predictions, weighted_loss};
pub use optim::{Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use run::{
    default_optimizer, evaluate, measure_batch_time, train, train_network, LearningPoint, TrainConfig, TrainReport,
    TrainRow, BATCH_GRAPHS, BATCH_REPEATS, ROLLING_WINDOW,
};
pub use schedule::{LrDecay, LrScheduler, LR_FACTOR, LR_FLOOR, LR_MIN_GAP, LR_WINDOW};

use thiserror::Error;

use crate::graph::GraphError;
use crate::models::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("non-finite loss at iteration {iteration} (lr {lr})")]
    NonFinite { iteration: usize, lr: f64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Model(ModelError::Tensor(e))
    }
}
