//! Dense tensors with tape-based reverse-mode differentiation.
//!
//! Computation is recorded on a [`Tape`] as it runs; [`Tape::backward`]
//! sweeps it in reverse and accumulates gradients into the
//! [`ParamStore`] that owns the trainable tensors. All kernels use a fixed
//! reduction order, so identical inputs give bitwise-identical results.

mod checkpoint;
mod element;
mod error;
mod gradcheck;
pub mod kernels;
mod norm;
mod params;
mod tape;
mod tensor;

pub use checkpoint::{
    Checkpoint, CheckpointEntry, EntryKind, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use element::Element;
pub use error::{Result, TensorError};
pub use gradcheck::{
    grad_check, relative_error, CoordinateError, GradCheckConfig, GradCheckReport,
};
pub use norm::{batch_norm, Mode, RunningStats, BN_EPS, BN_MOMENTUM};
pub use params::{Init, ParamId, ParamStore, Parameter};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
