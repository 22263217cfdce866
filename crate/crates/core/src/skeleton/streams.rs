use std::fmt;
use std::str::FromStr;

use super::graph::SkeletonGraph;
use super::sequence::SkeletonSequence;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamKind {
    Joint,
    Bone,
    JointMotion,
    BoneMotion,
}

impl StreamKind {
    pub const ALL: [StreamKind; 4] = [
        StreamKind::Joint,
        StreamKind::Bone,
        StreamKind::JointMotion,
        StreamKind::BoneMotion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StreamKind::Joint => "joint",
            StreamKind::Bone => "bone",
            StreamKind::JointMotion => "joint-motion",
            StreamKind::BoneMotion => "bone-motion",
        }
    }
}

impl fmt::Display for StreamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StreamKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StreamKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::config(
                    "data.stream",
                    format!(
                        "unknown stream `{s}` (expected joint, bone, joint-motion or bone-motion)"
                    ),
                )
            })
    }
}

/// `b_j = x_j − x_parent(j)`; the root's bone is zero.
fn bones(seq: &SkeletonSequence, graph: &SkeletonGraph) -> SkeletonSequence {
    let [m, c, t, n] = seq.dims();
    let mut out = seq.clone();
    for p in 0..m {
        for ch in 0..c {
            for f in 0..t {
                for j in 0..n {
                    let v = seq.at(p, ch, f, j) - seq.at(p, ch, f, graph.parent(j));
                    out.set(p, ch, f, j, v);
                }
            }
        }
    }
    out
}

/// `m_t = x_{t+1} − x_t`; the last frame is zero.
fn motion(seq: &SkeletonSequence) -> SkeletonSequence {
    let [m, c, t, n] = seq.dims();
    let mut out = seq.clone();
    for p in 0..m {
        for ch in 0..c {
            for f in 0..t {
                for j in 0..n {
                    let v = if f + 1 < t {
                        seq.at(p, ch, f + 1, j) - seq.at(p, ch, f, j)
                    } else {
                        0.0
                    };
                    out.set(p, ch, f, j, v);
                }
            }
        }
    }
    out
}

pub fn derive_stream(
    seq: &SkeletonSequence,
    kind: StreamKind,
    graph: &SkeletonGraph,
) -> Result<SkeletonSequence> {
    if graph.num_joints() != seq.joints() {
        return Err(Error::Data(format!(
            "graph `{}` has {} joints, sequence has {}",
            graph.name(),
            graph.num_joints(),
            seq.joints()
        )));
    }
    Ok(match kind {
        StreamKind::Joint => seq.clone(),
        StreamKind::Bone => bones(seq, graph),
        StreamKind::JointMotion => motion(seq),
        StreamKind::BoneMotion => motion(&bones(seq, graph)),
    })
}
