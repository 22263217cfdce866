//! Windowed spatial-temporal graph attention for skeleton action recognition.
//!
//! * [`skeleton`]: sequence type, NTU / Kinetics readers, the binary dataset
//!   container, frame sampling, derived streams and synthetic data.
//! * [`stgraph`]: frame windows, adjacency normalization, hop-distance groups.
//! * [`attention`]: affinity kinds and multi-head window attention.
//! * [`layers`]: motion embedding, frame weighting, blocks and the model.
//! * [`train`]: optimizer, training loop, metrics and score fusion.
//! * [`config`]: TOML run configuration.

pub mod attention;
pub mod config;
pub mod error;
pub mod layers;
pub mod skeleton;
pub mod stgraph;
pub mod train;

pub use error::{Error, Result};
