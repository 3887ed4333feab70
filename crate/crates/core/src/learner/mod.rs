//! Small classifiers, their SGD trainer, checkpoints and ensembles.

mod checkpoint;
mod ensemble;
mod model;
mod train;

pub use checkpoint::{Checkpoint, CheckpointStore, RunMeta};
pub use ensemble::{build_ensemble, predict_pool, train_ensemble, EnsembleConfig, EnsembleMode};
pub(crate) use ensemble::predict_rows;
pub use model::{softmax_in_place, Architecture, ModelParams, Scratch};
pub use train::{class_weights, fine_tune, objective, objective_and_gradient, train, EpochStats, TrainConfig, TrainingRun};
