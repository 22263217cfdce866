//! Optimization, evaluation and multi-stream score fusion.

mod fusion;
mod metrics;
mod sgd;
mod trainer;

pub use fusion::{fuse_streams, labels_from_csv, labels_to_csv, ScoreTable};
pub use metrics::{argmax, rank_of, softmax_row, ClassAccuracy, Metrics};
pub use sgd::{lr_at, Sgd, TrainConfig};
pub use trainer::{evaluate, train, EpochRecord, Evaluation, TrainReport};
