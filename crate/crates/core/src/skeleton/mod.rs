//! Skeleton sequences: file formats, preprocessing, derived streams and
//! synthetic data.

mod dataset;
mod graph;
mod kinetics;
mod ntu;
mod preprocess;
mod sequence;
mod streams;
mod synth;

pub use dataset::{
    load_dataset, read_dataset, save_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION,
};
pub use graph::SkeletonGraph;
pub use kinetics::{
    parse_kinetics_json, write_kinetics_json, KINETICS_JOINTS, KINETICS_MAX_PERSONS,
};
pub use ntu::{parse_ntu_skeleton, write_ntu_skeleton, NTU_JOINTS, NTU_MAX_BODIES};
pub use preprocess::{preprocess, FrameSampling, SplitMode};
pub use sequence::{SkeletonSequence, SourceFormat};
pub use streams::{derive_stream, StreamKind};
pub use synth::{
    synth_dataset, synth_sample, ClassSpec, MicroGesture, Oscillation, SynthSpec, DESK_JOINTS,
    DESK_REST_POSE, SIMILAR_PAIR_AMPLITUDE,
};
