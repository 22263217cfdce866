//! Reader for OpenPose-derived skeleton JSON clips:
//!
//! ```json
//! {"data": [{"frame_index": 1,
//!            "skeleton": [{"pose": [x0, y0, x1, y1, ...], "score": [s0, s1, ...]}]}],
//!  "label": "...", "label_index": 3}
//! ```
//!
//! Channels are `(x, y, score)`. Frames appear in file order.

use serde::{Deserialize, Serialize};

use super::sequence::{SkeletonSequence, SourceFormat};
use crate::error::{Error, Result};

pub const KINETICS_JOINTS: usize = 18;
pub const KINETICS_MAX_PERSONS: usize = 2;

#[derive(Serialize, Deserialize)]
struct Clip {
    data: Vec<Frame>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label_index: Option<i64>,
}

#[derive(Serialize, Deserialize)]
struct Frame {
    frame_index: usize,
    skeleton: Vec<Person>,
}

#[derive(Serialize, Deserialize)]
struct Person {
    pose: Vec<f64>,
    score: Vec<f64>,
}

/// Parses one clip. Up to two persons are kept per frame in listed order;
/// missing persons are zero.
pub fn parse_kinetics_json(text: &str) -> Result<SkeletonSequence> {
    let clip: Clip = serde_json::from_str(text).map_err(|e| Error::Parse {
        location: format!("line {} column {}", e.line(), e.column()),
        msg: e.to_string(),
    })?;
    if clip.data.is_empty() {
        return Err(Error::Data("empty sequence: no frames".into()));
    }
    for frame in &clip.data {
        for person in &frame.skeleton {
            let joints = person.pose.len() / 2;
            if person.pose.len() != 2 * KINETICS_JOINTS || person.score.len() != KINETICS_JOINTS {
                return Err(Error::parse_frame(
                    frame.frame_index,
                    format!(
                        "person has {joints} joints ({} pose values, {} scores), expected {KINETICS_JOINTS}",
                        person.pose.len(),
                        person.score.len()
                    ),
                ));
            }
            if let Some(s) = person.score.iter().find(|s| !(0.0..=1.0).contains(*s)) {
                return Err(Error::parse_frame(
                    frame.frame_index,
                    format!("confidence {s} outside [0, 1]"),
                ));
            }
        }
    }

    let m = clip
        .data
        .iter()
        .map(|f| f.skeleton.len())
        .max()
        .unwrap_or(0)
        .clamp(1, KINETICS_MAX_PERSONS);
    let t = clip.data.len();
    let label = match clip.label_index {
        Some(i) if i >= 0 => Some(i as usize),
        _ => None,
    };
    let mut seq =
        SkeletonSequence::zeros([m, 3, t, KINETICS_JOINTS], label, SourceFormat::Kinetics)?;
    for (f, frame) in clip.data.iter().enumerate() {
        for (p, person) in frame.skeleton.iter().take(m).enumerate() {
            for j in 0..KINETICS_JOINTS {
                seq.set(p, 0, f, j, person.pose[2 * j]);
                seq.set(p, 1, f, j, person.pose[2 * j + 1]);
                seq.set(p, 2, f, j, person.score[j]);
            }
        }
    }
    Ok(seq)
}

/// Inverse of [`parse_kinetics_json`]. Trailing all-zero persons are omitted
/// from a frame.
pub fn write_kinetics_json(seq: &SkeletonSequence) -> Result<String> {
    let [m, c, t, n] = seq.dims();
    if c != 3 || n != KINETICS_JOINTS {
        return Err(Error::Data(format!(
            "cannot write ({m},{c},{t},{n}) as kinetics json"
        )));
    }
    let data = (0..t)
        .map(|f| Frame {
            frame_index: f + 1,
            skeleton: (0..m)
                .take_while(|&p| {
                    (p..m).any(|q| (0..c).any(|ch| (0..n).any(|j| seq.at(q, ch, f, j) != 0.0)))
                })
                .map(|p| Person {
                    pose: (0..n)
                        .flat_map(|j| [seq.at(p, 0, f, j), seq.at(p, 1, f, j)])
                        .collect(),
                    score: (0..n).map(|j| seq.at(p, 2, f, j)).collect(),
                })
                .collect(),
        })
        .collect();
    let clip = Clip {
        data,
        label: None,
        label_index: seq.label.map(|l| l as i64),
    };
    serde_json::to_string(&clip).map_err(|e| Error::Data(e.to_string()))
}
