//! Network building blocks and the full classifier.

mod atw;
mod block;
mod emm;
mod model;
mod norm;

pub use atw::AdaptiveFrameWeights;
pub use block::{BlockConfig, BlockOutput, FrameWeightingKind, Shortcut, Stgab, TEMPORAL_KERNEL};
pub use emm::{frame_difference, Embedding};
pub use model::{stack_batch, ModelConfig, ModelOutput, Stgat, FULL_CHANNELS};
pub use norm::BatchNorm;
